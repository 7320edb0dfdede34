#include "suave/assign.hpp"

#include <algorithm>
#include <cmath>

#include "suave/errors.hpp"

namespace suave {

void SinkhornConfig::validate(std::size_t unlabeled_batch) const {
  if (epsilon <= 0.0) {
    throw ConfigError("sinkhorn: epsilon must be positive");
  }
  if (iterations <= 0) {
    throw ConfigError("sinkhorn: iterations must be positive");
  }
  if (queue_capacity > 0) {
    if (unlabeled_batch == 0 || queue_capacity % unlabeled_batch != 0) {
      throw ConfigError("sinkhorn: queue_capacity must be a multiple of the unlabeled batch");
    }
  }
}

void LogitQueue::push_batch(const Matrix& logits) {
  if (capacity_ == 0) {
    return;
  }
  if (logits.cols != cols_) {
    throw ShapeError("LogitQueue: column count disagrees with queue width");
  }
  for (std::size_t r = 0; r < logits.rows; ++r) {
    rows_.emplace_back(logits.row(r), logits.row(r) + cols_);
    if (rows_.size() > capacity_) {
      rows_.pop_front();
    }
  }
}

Matrix LogitQueue::snapshot() const {
  Matrix m(rows_.size(), cols_);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    std::copy(rows_[r].begin(), rows_[r].end(), m.row(r));
  }
  return m;
}

double CenterState::norm() const {
  double sq = 0.0;
  for (double g : gamma) {
    sq += g * g;
  }
  return std::sqrt(sq);
}

namespace {

// One column-then-row normalization round on the classes x samples plan.
// Returns the max column deviation from 1/samples measured after the row
// pass (row sums are exact at that point).
double normalize_round(Matrix& plan) {
  const std::size_t classes = plan.rows;
  const std::size_t samples = plan.cols;
  const double col_target = 1.0 / static_cast<double>(samples);
  const double row_target = 1.0 / static_cast<double>(classes);

  std::vector<double> col_sums(samples, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    const double* row = plan.row(k);
    for (std::size_t j = 0; j < samples; ++j) {
      col_sums[j] += row[j];
    }
  }
  for (std::size_t j = 0; j < samples; ++j) {
    col_sums[j] = col_target / std::max(col_sums[j], 1e-300);
  }
  for (std::size_t k = 0; k < classes; ++k) {
    double* row = plan.row(k);
    for (std::size_t j = 0; j < samples; ++j) {
      row[j] *= col_sums[j];
    }
  }

  std::vector<double> new_col(samples, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    double* row = plan.row(k);
    double sum = 0.0;
    for (std::size_t j = 0; j < samples; ++j) {
      sum += row[j];
    }
    const double f = row_target / std::max(sum, 1e-300);
    for (std::size_t j = 0; j < samples; ++j) {
      row[j] *= f;
      new_col[j] += row[j];
    }
  }
  double residual = 0.0;
  for (std::size_t j = 0; j < samples; ++j) {
    residual = std::max(residual, std::abs(new_col[j] - col_target));
  }
  return residual;
}

Matrix initial_plan(const Matrix& logits, double epsilon) {
  if (logits.rows == 0 || logits.cols == 0) {
    throw ContractError("sinkhorn: empty logits");
  }
  const std::size_t samples = logits.rows;
  const std::size_t classes = logits.cols;
  Matrix plan(classes, samples);
  for (std::size_t j = 0; j < samples; ++j) {
    const double* l = logits.row(j);
    double mx = l[0];
    for (std::size_t k = 1; k < classes; ++k) {
      mx = std::max(mx, l[k]);
    }
    // Per-sample max shift keeps the exponential bounded by 1.
    for (std::size_t k = 0; k < classes; ++k) {
      plan.at(k, j) = std::exp((l[k] - mx) / epsilon);
    }
  }
  return plan;
}

SinkhornResult run_sinkhorn(const Matrix& logits, double epsilon, int max_rounds, double tol) {
  SinkhornResult result;
  result.plan = initial_plan(logits, epsilon);
  for (int it = 0; it < max_rounds; ++it) {
    result.residual = normalize_round(result.plan);
    result.iterations_run = it + 1;
    if (tol > 0.0 && result.residual < tol) {
      break;
    }
  }
  return result;
}

}  // namespace

SinkhornResult sinkhorn_plan(const Matrix& logits, double epsilon, int iterations) {
  if (iterations <= 0) {
    throw ContractError("sinkhorn: iterations must be positive");
  }
  return run_sinkhorn(logits, epsilon, iterations, 0.0);
}

SinkhornResult sinkhorn_plan_converged(const Matrix& logits, double epsilon, double tol,
                                       int max_iterations) {
  if (max_iterations <= 0 || tol <= 0.0) {
    throw ContractError("sinkhorn: tolerance and iteration cap must be positive");
  }
  return run_sinkhorn(logits, epsilon, max_iterations, tol);
}

Assignment sinkhorn_assign(const Matrix& batch_logits, LogitQueue& queue,
                           const SinkhornConfig& cfg) {
  const std::size_t batch = batch_logits.rows;
  const std::size_t classes = batch_logits.cols;
  if (batch == 0) {
    throw ContractError("sinkhorn_assign: empty batch");
  }

  Matrix combined;
  std::size_t batch_offset = 0;
  if (queue.capacity() > 0 && !queue.empty()) {
    const Matrix ctx = queue.snapshot();
    combined = Matrix(ctx.rows + batch, classes);
    std::copy(ctx.data.begin(), ctx.data.end(), combined.data.begin());
    std::copy(batch_logits.data.begin(), batch_logits.data.end(),
              combined.data.begin() + ctx.data.size());
    batch_offset = ctx.rows;
  } else {
    combined = batch_logits;
  }

  const SinkhornResult solved = sinkhorn_plan(combined, cfg.epsilon, cfg.iterations);

  Assignment out;
  out.values = Matrix(batch, classes);
  for (std::size_t j = 0; j < batch; ++j) {
    const std::size_t col = batch_offset + j;
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      sum += solved.plan.at(k, col);
    }
    for (std::size_t k = 0; k < classes; ++k) {
      out.values.at(j, k) = solved.plan.at(k, col) / sum;
    }
  }

  queue.push_batch(batch_logits);
  return out;
}

Assignment center_sharpen_assign(const Matrix& batch_logits, const CenterState& center,
                                 double epsilon) {
  if (epsilon <= 0.0) {
    throw ContractError("center_sharpen_assign: epsilon must be positive");
  }
  if (center.gamma.size() != batch_logits.cols) {
    throw ShapeError("center_sharpen_assign: center width disagrees with logits");
  }
  const std::size_t rows = batch_logits.rows;
  const std::size_t cols = batch_logits.cols;
  Assignment out;
  out.values = Matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* l = batch_logits.row(r);
    double mx = (l[0] - center.gamma[0]) / epsilon;
    for (std::size_t c = 1; c < cols; ++c) {
      mx = std::max(mx, (l[c] - center.gamma[c]) / epsilon);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp((l[c] - center.gamma[c]) / epsilon - mx);
      out.values.at(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      out.values.at(r, c) /= sum;
    }
  }
  return out;
}

void update_center(CenterState& center, const Matrix& batch_logits) {
  if (center.gamma.size() != batch_logits.cols) {
    throw ShapeError("update_center: center width disagrees with logits");
  }
  if (batch_logits.rows == 0) {
    throw ContractError("update_center: empty batch");
  }
  const double inv = 1.0 / static_cast<double>(batch_logits.rows);
  for (std::size_t c = 0; c < batch_logits.cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < batch_logits.rows; ++r) {
      mean += batch_logits.at(r, c);
    }
    mean *= inv;
    center.gamma[c] = center.mu * center.gamma[c] + (1.0 - center.mu) * mean;
  }
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) {
      h -= v * std::log(v);
    }
  }
  return h;
}

double mean_assignment_entropy(const Assignment& a) {
  if (a.rows() == 0) {
    return 0.0;
  }
  std::vector<double> mean(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      mean[c] += a.values.at(r, c);
    }
  }
  for (double& v : mean) {
    v /= static_cast<double>(a.rows());
  }
  return entropy(mean);
}

}  // namespace suave
