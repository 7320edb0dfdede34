#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "suave/matrix.hpp"

namespace suave {

// Row-stochastic soft cluster assignments, one row per batch sample.
// Detached by construction: plain values, no tape.
struct Assignment {
  Matrix values;

  std::size_t rows() const { return values.rows; }
  std::size_t cols() const { return values.cols; }
};

struct SinkhornConfig {
  double epsilon = 0.05;
  int iterations = 3;
  std::size_t queue_capacity = 0;  // 0 disables the queue

  // Throws ConfigError on non-positive epsilon/iterations or a capacity that
  // is not a multiple of the unlabeled batch size.
  void validate(std::size_t unlabeled_batch) const;
};

// FIFO ring of detached logit rows from past batches, used as extra context
// columns of the transport problem. Oldest rows are evicted beyond capacity.
class LogitQueue {
 public:
  LogitQueue() = default;
  explicit LogitQueue(std::size_t capacity, std::size_t cols)
      : capacity_(capacity), cols_(cols) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return rows_.size(); }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_.empty(); }

  void push_batch(const Matrix& logits);

  // Queued rows, oldest first, as a size() x cols matrix.
  Matrix snapshot() const;

  void clear() { rows_.clear(); }

 private:
  std::size_t capacity_ = 0;
  std::size_t cols_ = 0;
  std::deque<std::vector<double>> rows_;
};

// Running estimate of the mean target logit, used to debias before
// sharpening.
struct CenterState {
  std::vector<double> gamma;
  double mu = 0.9;

  double norm() const;
};

struct SinkhornResult {
  // Transport plan, classes x samples, row sums 1/C, column sums 1/R.
  Matrix plan;
  int iterations_run = 0;
  // Max column-marginal deviation after the final round (rows are exact).
  double residual = 0.0;
};

// Entropic transport plan for `logits` (R samples x C classes) by alternating
// column-then-row marginal normalization of exp(logits^T / epsilon) for a
// fixed number of rounds. Each sample's column is max-shifted before the
// exponential, so the plan is invariant to per-sample constant shifts.
SinkhornResult sinkhorn_plan(const Matrix& logits, double epsilon, int iterations);

// Same iteration, stopped once the marginal residual falls below `tol` or at
// `max_iterations` rounds.
SinkhornResult sinkhorn_plan_converged(const Matrix& logits, double epsilon, double tol = 1e-6,
                                       int max_iterations = 1000);

// Solves the transport problem over [queue rows; batch rows], returns the
// batch columns rescaled to sum 1 (transposed to batch x classes), then
// pushes the batch logits into the queue.
Assignment sinkhorn_assign(const Matrix& batch_logits, LogitQueue& queue,
                           const SinkhornConfig& cfg);

// Rowwise softmax((logits - gamma) / epsilon).
Assignment center_sharpen_assign(const Matrix& batch_logits, const CenterState& center,
                                 double epsilon);

// gamma <- mu * gamma + (1 - mu) * column mean of batch_logits.
void update_center(CenterState& center, const Matrix& batch_logits);

// Shannon entropy of one distribution; 0 log 0 counts as 0.
double entropy(const std::vector<double>& p);

// Entropy of the column mean of the assignment rows (the collapse sentinel).
double mean_assignment_entropy(const Assignment& a);

}  // namespace suave
