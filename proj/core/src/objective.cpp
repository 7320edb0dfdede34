#include "suave/objective.hpp"

#include <cmath>
#include <string>

#include "suave/errors.hpp"

namespace suave {

void LossConfig::validate() const {
  if (tau <= 0.0) {
    throw ConfigError("loss: tau must be positive");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ConfigError("loss: label_smoothing must lie in [0, 1)");
  }
}

Matrix smooth_labels(const std::vector<int>& labels, std::size_t classes, double factor) {
  if (factor < 0.0 || factor >= 1.0) {
    throw ContractError("smooth_labels: factor must lie in [0, 1)");
  }
  const double cold = factor / static_cast<double>(classes);
  const double hot = 1.0 - factor + cold;
  Matrix out(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ContractError("smooth_labels: label out of range at row " + std::to_string(r));
    }
    for (std::size_t c = 0; c < classes; ++c) {
      out.at(r, c) = cold;
    }
    out.at(r, static_cast<std::size_t>(labels[r])) = hot;
  }
  return out;
}

TargetBatch build_targets(std::span<const TargetSource> rows, std::size_t classes,
                          const Assignment& assignments, const LossConfig& cfg) {
  cfg.validate();
  TargetBatch out;
  out.values = Matrix(rows.size(), classes);
  out.origin.reserve(rows.size());
  const double cold = cfg.label_smoothing / static_cast<double>(classes);
  const double hot = 1.0 - cfg.label_smoothing + cold;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const TargetSource& src = rows[r];
    if (src.label.has_value() == src.assignment_row.has_value()) {
      throw ContractError("build_targets: row " + std::to_string(r) +
                          " must have exactly one source");
    }
    if (src.label) {
      const int y = *src.label;
      if (y < 0 || static_cast<std::size_t>(y) >= classes) {
        throw ContractError("build_targets: label out of range at row " + std::to_string(r));
      }
      for (std::size_t c = 0; c < classes; ++c) {
        out.values.at(r, c) = cold;
      }
      out.values.at(r, static_cast<std::size_t>(y)) = hot;
      out.origin.push_back(TargetOrigin::label);
    } else {
      const std::size_t a = *src.assignment_row;
      if (a >= assignments.rows()) {
        throw ContractError("build_targets: assignment row out of range at row " +
                            std::to_string(r));
      }
      if (assignments.cols() != classes) {
        throw ShapeError("build_targets: assignment width disagrees with class count");
      }
      for (std::size_t c = 0; c < classes; ++c) {
        out.values.at(r, c) = assignments.values.at(a, c);
      }
      out.origin.push_back(TargetOrigin::pseudo);
    }
  }
  return out;
}

namespace {

void check_target_rows(const TargetBatch& targets, std::size_t logits_rows,
                       std::size_t classes) {
  if (targets.rows() != logits_rows || targets.cols() != classes) {
    throw ShapeError("soft_cross_entropy: target shape disagrees with logits");
  }
  for (std::size_t r = 0; r < targets.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = targets.values.at(r, c);
      if (v < -1e-12) {
        throw ContractError("soft_cross_entropy: negative target entry at row " +
                            std::to_string(r));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ContractError("soft_cross_entropy: target row " + std::to_string(r) +
                          " does not sum to 1");
    }
  }
}

}  // namespace

Tensor soft_cross_entropy(const Tensor& logits, const TargetBatch& targets, double tau) {
  if (tau <= 0.0) {
    throw ContractError("soft_cross_entropy: tau must be positive");
  }
  const std::size_t rows = logits.rows();
  const std::size_t classes = logits.cols();
  check_target_rows(targets, rows, classes);
  const Tensor log_probs = log_softmax_rows(scale(logits, 1.0 / tau));
  const Tensor weights = Tensor::from_matrix(targets.values, /*requires_grad=*/false);
  // mean over rows of -sum_k t log s = -classes * mean over all entries.
  return scale(mean_all(mul(weights, log_probs)), -static_cast<double>(classes));
}

LossBreakdown multiview_loss(const MultiViewBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const bool has_unlabeled = !batch.globals.empty();
  if (!has_unlabeled && !batch.labeled) {
    throw ContractError("multiview_loss: no views supplied");
  }
  if (has_unlabeled && batch.globals.size() != 2) {
    throw ContractError("multiview_loss: exactly 2 global views must carry targets");
  }
  if (!batch.local_logits.empty() && batch.local_targets.size() != batch.globals.size()) {
    throw ContractError(
        "multiview_loss: local views take one target batch per global view, nothing else");
  }
  if (!has_unlabeled && !batch.local_logits.empty()) {
    throw ContractError("multiview_loss: local views require global views");
  }

  Tensor unsup_weighted;  // sum over pairs of rows * pair CE, built on tape
  std::size_t unlabeled_terms = 0;
  auto fold_pair = [&](const Tensor& logits, const TargetBatch& targets) {
    const Tensor ce = soft_cross_entropy(logits, targets, cfg.tau);
    const std::size_t terms = logits.rows();
    const Tensor weighted = scale(ce, static_cast<double>(terms));
    unsup_weighted = unsup_weighted.defined() ? add(unsup_weighted, weighted) : weighted;
    unlabeled_terms += terms;
  };
  if (has_unlabeled) {
    for (const ViewTerm& g : batch.globals) {
      fold_pair(g.logits, g.targets);
    }
    for (const Tensor& local : batch.local_logits) {
      for (const TargetBatch& t : batch.local_targets) {
        if (t.rows() != local.rows()) {
          throw ShapeError("multiview_loss: local view rows disagree with global targets");
        }
        fold_pair(local, t);
      }
    }
  }

  Tensor sup;
  std::size_t labeled_terms = 0;
  if (batch.labeled) {
    sup = soft_cross_entropy(batch.labeled->logits, batch.labeled->targets, cfg.tau);
    labeled_terms = batch.labeled->logits.rows();
  }

  const double total_terms = static_cast<double>(labeled_terms + unlabeled_terms);
  LossBreakdown out;
  out.labeled_terms = labeled_terms;
  out.unlabeled_terms = unlabeled_terms;
  if (labeled_terms > 0 && unlabeled_terms > 0) {
    out.total = add(scale(sup, static_cast<double>(labeled_terms) / total_terms),
                    scale(unsup_weighted, 1.0 / total_terms));
  } else if (labeled_terms > 0) {
    out.total = sup;
  } else {
    out.total = scale(unsup_weighted, 1.0 / total_terms);
  }
  out.supervised = labeled_terms > 0 ? sup.scalar_value() : 0.0;
  out.unsupervised =
      unlabeled_terms > 0 ? unsup_weighted.scalar_value() / static_cast<double>(unlabeled_terms)
                          : 0.0;
  return out;
}

}  // namespace suave
