#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "suave/assign.hpp"
#include "suave/matrix.hpp"
#include "suave/tensor.hpp"

namespace suave {

enum class TargetOrigin { label, pseudo };

// Row-stochastic supervision targets with per-row provenance. Plain values,
// so gradients can never flow into a target.
struct TargetBatch {
  Matrix values;
  std::vector<TargetOrigin> origin;

  std::size_t rows() const { return values.rows; }
  std::size_t cols() const { return values.cols; }
};

struct LossConfig {
  double tau = 0.1;               // prediction softmax temperature
  double label_smoothing = 0.01;  // in [0, 1)

  void validate() const;
};

// One-hot rows smoothed to hot = 1 - factor + factor/C, cold = factor/C.
Matrix smooth_labels(const std::vector<int>& labels, std::size_t classes, double factor);

// Exactly one source per output row: a ground-truth class or a row of the
// assignment block. Output rows keep the input order.
struct TargetSource {
  std::optional<int> label;
  std::optional<std::size_t> assignment_row;
};

TargetBatch build_targets(std::span<const TargetSource> rows, std::size_t classes,
                          const Assignment& assignments, const LossConfig& cfg);

// Mean over rows of -sum_k t_k * log softmax(logits / tau)_k. Differentiable
// with respect to logits only; target rows must sum to 1.
Tensor soft_cross_entropy(const Tensor& logits, const TargetBatch& targets, double tau);

// One prediction view paired with the target batch that supervises its rows.
struct ViewTerm {
  Tensor logits;
  TargetBatch targets;
};

// The per-step loss layout. Exactly two global views carry targets (each the
// assignment derived from the other global); local views are supervised by
// the original per-global target batches and never carry their own.
struct MultiViewBatch {
  std::vector<ViewTerm> globals;           // 2 when any unlabeled rows exist
  std::vector<Tensor> local_logits;        // any number, unmixed rows
  std::vector<TargetBatch> local_targets;  // one per global view
  std::optional<ViewTerm> labeled;         // the single lightly-augmented view
};

struct LossBreakdown {
  Tensor total;
  double supervised = 0.0;    // value of the labeled part (0 when absent)
  double unsupervised = 0.0;  // value of the unlabeled part (0 when absent)
  std::size_t labeled_terms = 0;
  std::size_t unlabeled_terms = 0;
};

// total = (n_l * L_sup + n_u * L_unsup) / (n_l + n_u) where terms are per-row
// cross entropies; L_unsup averages the (view, global) pairs weighted by
// their row counts, so every term weighs equally overall.
LossBreakdown multiview_loss(const MultiViewBatch& batch, const LossConfig& cfg);

}  // namespace suave
