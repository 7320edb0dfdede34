#include "suave/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

#include "suave/errors.hpp"

namespace suave {

namespace {

thread_local int no_grad_depth = 0;

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(std::size_t rows, std::size_t cols) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->values.assign(rows * cols, 0.0);
  return n;
}

void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) {
    n.grad.assign(n.values.size(), 0.0);
  }
}

void debug_check_finite([[maybe_unused]] const char* op,
                        [[maybe_unused]] const std::vector<double>& v) {
#ifndef NDEBUG
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw ContractError(std::string(op) + ": non-finite value produced");
    }
  }
#endif
}

const NodePtr& node_of(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor operand");
  }
  return t.node();
}

}  // namespace

// Records one op. The output requires grad iff any input does and recording
// is enabled; only then are parent links and the closure attached.
class TapeBuilder {
 public:
  static Tensor record(std::size_t rows, std::size_t cols, std::vector<double> values,
                       std::vector<NodePtr> parents,
                       std::function<void(TensorNode&)> backprop, const char* op) {
    debug_check_finite(op, values);
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->values = std::move(values);
    bool rg = false;
    if (grad_enabled()) {
      for (const auto& p : parents) {
        rg = rg || (p && p->requires_grad);
      }
    }
    n->requires_grad = rg;
    if (rg) {
      n->parents = std::move(parents);
      n->backprop = std::move(backprop);
    }
    return Tensor(n);
  }
};

namespace {

Tensor record_op(std::size_t rows, std::size_t cols, std::vector<double> values,
                 std::vector<NodePtr> parents, std::function<void(TensorNode&)> backprop,
                 const char* op) {
  return TapeBuilder::record(rows, cols, std::move(values), std::move(parents),
                             std::move(backprop), op);
}

}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_values(std::size_t rows, std::size_t cols, std::vector<double> values,
                           bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("Tensor::from_values: value count does not match rows*cols");
  }
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_matrix(const Matrix& m, bool requires_grad) {
  return from_values(m.rows, m.cols, m.data, requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values(1, 1, {value}, requires_grad);
}

std::size_t Tensor::rows() const { return node_of(*this, "Tensor::rows")->rows; }
std::size_t Tensor::cols() const { return node_of(*this, "Tensor::cols")->cols; }

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

const std::vector<double>& Tensor::values() const {
  return node_of(*this, "Tensor::values")->values;
}

double Tensor::value_at(std::size_t r, std::size_t c) const {
  const auto& n = node_of(*this, "Tensor::value_at");
  return n->values[r * n->cols + c];
}

double Tensor::scalar_value() const {
  const auto& n = node_of(*this, "Tensor::scalar_value");
  if (n->rows != 1 || n->cols != 1) {
    throw ShapeError("Tensor::scalar_value: tensor is not 1x1");
  }
  return n->values[0];
}

Matrix Tensor::to_matrix() const {
  const auto& n = node_of(*this, "Tensor::to_matrix");
  return Matrix(n->rows, n->cols, n->values);
}

std::vector<double>& Tensor::mutable_values() {
  const auto& n = node_of(*this, "Tensor::mutable_values");
  if (!n->parents.empty() || n->backprop) {
    throw ContractError("Tensor::mutable_values: recorded tensors are immutable");
  }
  return n->values;
}

std::span<const double> Tensor::grad() const {
  const auto& n = node_of(*this, "Tensor::grad");
  return {n->grad.data(), n->grad.size()};
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

void Tensor::clear_grad() {
  if (defined()) {
    node_->grad.clear();
  }
}

Tensor Tensor::detach() const {
  const auto& n = node_of(*this, "Tensor::detach");
  return Tensor::from_values(n->rows, n->cols, n->values, false);
}

void backward(const Tensor& loss) {
  const auto& root = node_of(loss, "backward");
  if (root->rows != 1 || root->cols != 1) {
    throw ContractError("backward: loss must be a 1x1 scalar");
  }
  if (!root->requires_grad) {
    throw ContractError("backward: loss does not require grad");
  }

  // Post-order DFS yields parents before consumers; iterating the list in
  // reverse visits each node exactly once, consumers first.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next].get();
      ++next;
      if (parent && parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop) {
      ensure_grad(*node);
      node->backprop(*node);
    }
  }

  // Release the tape: drop closures, parent links and intermediate grads.
  // Leaves keep their gradients for the optimizer.
  for (TensorNode* node : order) {
    if (node->backprop) {
      node->backprop = nullptr;
      node->parents.clear();
      node->grad.clear();
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const auto& an = node_of(a, "matmul");
  const auto& bn = node_of(b, "matmul");
  const std::size_t m = an->rows;
  const std::size_t k = an->cols;
  const std::size_t n = transpose_b ? bn->rows : bn->cols;
  const std::size_t bk = transpose_b ? bn->cols : bn->rows;
  if (bk != k) {
    throw ShapeError("matmul: inner dimensions disagree");
  }
  std::vector<double> out(m * n);
  if (transpose_b) {
    gemm_nt(an->values.data(), bn->values.data(), out.data(), m, k, n);
  } else {
    gemm_nn(an->values.data(), bn->values.data(), out.data(), m, k, n);
  }
  auto backprop = [an, bn, m, k, n, transpose_b](TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      ensure_grad(*an);
      std::vector<double> tmp(m * k);
      if (transpose_b) {
        gemm_nn(g, bn->values.data(), tmp.data(), m, n, k);
      } else {
        gemm_nt(g, bn->values.data(), tmp.data(), m, n, k);
      }
      for (std::size_t i = 0; i < tmp.size(); ++i) {
        an->grad[i] += tmp[i];
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      std::vector<double> tmp(bn->values.size());
      if (transpose_b) {
        gemm_tn(g, an->values.data(), tmp.data(), n, m, k);
      } else {
        gemm_tn(an->values.data(), g, tmp.data(), k, m, n);
      }
      for (std::size_t i = 0; i < tmp.size(); ++i) {
        bn->grad[i] += tmp[i];
      }
    }
  };
  return record_op(m, n, std::move(out), {an, bn}, std::move(backprop), "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& an = node_of(a, "add");
  const auto& bn = node_of(b, "add");
  const bool broadcast = bn->rows == 1 && an->cols == bn->cols && an->rows != 1;
  if (!broadcast && (an->rows != bn->rows || an->cols != bn->cols)) {
    throw ShapeError("add: shapes disagree and second operand is not a 1xN row");
  }
  std::vector<double> out(an->values.size());
  if (broadcast) {
    for (std::size_t r = 0; r < an->rows; ++r) {
      for (std::size_t c = 0; c < an->cols; ++c) {
        out[r * an->cols + c] = an->values[r * an->cols + c] + bn->values[c];
      }
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = an->values[i] + bn->values[i];
    }
  }
  auto backprop = [an, bn, broadcast](TensorNode& self) {
    if (an->requires_grad) {
      ensure_grad(*an);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        an->grad[i] += self.grad[i];
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      if (broadcast) {
        for (std::size_t r = 0; r < self.rows; ++r) {
          for (std::size_t c = 0; c < self.cols; ++c) {
            bn->grad[c] += self.grad[r * self.cols + c];
          }
        }
      } else {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          bn->grad[i] += self.grad[i];
        }
      }
    }
  };
  return record_op(an->rows, an->cols, std::move(out), {an, bn}, std::move(backprop), "add");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto& an = node_of(a, "mul");
  const auto& bn = node_of(b, "mul");
  if (an->rows != bn->rows || an->cols != bn->cols) {
    throw ShapeError("mul: shapes disagree");
  }
  std::vector<double> out(an->values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = an->values[i] * bn->values[i];
  }
  auto backprop = [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      ensure_grad(*an);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        an->grad[i] += self.grad[i] * bn->values[i];
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        bn->grad[i] += self.grad[i] * an->values[i];
      }
    }
  };
  return record_op(an->rows, an->cols, std::move(out), {an, bn}, std::move(backprop), "mul");
}

Tensor relu(const Tensor& x) {
  const auto& xn = node_of(x, "relu");
  std::vector<double> out(xn->values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xn->values[i] > 0.0 ? xn->values[i] : 0.0;
  }
  auto backprop = [xn](TensorNode& self) {
    if (!xn->requires_grad) {
      return;
    }
    ensure_grad(*xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xn->values[i] > 0.0) {
        xn->grad[i] += self.grad[i];
      }
    }
  };
  return record_op(xn->rows, xn->cols, std::move(out), {xn}, std::move(backprop), "relu");
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, bool update_running, double momentum,
                  double eps) {
  const auto& xn = node_of(x, "batch_norm");
  const auto& gn = node_of(gamma, "batch_norm");
  const auto& bn = node_of(beta, "batch_norm");
  const std::size_t rows = xn->rows;
  const std::size_t f = xn->cols;
  auto expect_row = [f](const NodePtr& n, const char* what) {
    if (n->rows != 1 || n->cols != f) {
      throw ShapeError(std::string("batch_norm: ") + what + " must be 1 x features");
    }
  };
  expect_row(gn, "gamma");
  expect_row(bn, "beta");
  expect_row(node_of(running_mean, "batch_norm"), "running_mean");
  expect_row(node_of(running_var, "batch_norm"), "running_var");
  if (training && rows < 2) {
    throw ContractError("batch_norm: train mode requires a batch of at least 2 rows");
  }

  std::vector<double> mean(f, 0.0);
  std::vector<double> inv_std(f, 0.0);
  if (training) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < f; ++c) {
        mean[c] += xn->values[r * f + c];
      }
    }
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] /= static_cast<double>(rows);
    }
    std::vector<double> var(f, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < f; ++c) {
        const double d = xn->values[r * f + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < f; ++c) {
      var[c] /= static_cast<double>(rows);
      inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    }
    if (update_running) {
      auto& rm = running_mean.mutable_values();
      auto& rv = running_var.mutable_values();
      for (std::size_t c = 0; c < f; ++c) {
        rm[c] = momentum * rm[c] + (1.0 - momentum) * mean[c];
        rv[c] = momentum * rv[c] + (1.0 - momentum) * var[c];
      }
    }
  } else {
    const auto& rm = running_mean.values();
    const auto& rv = running_var.values();
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + eps);
    }
  }

  auto xhat = std::make_shared<std::vector<double>>(rows * f);
  std::vector<double> out(rows * f);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const double h = (xn->values[r * f + c] - mean[c]) * inv_std[c];
      (*xhat)[r * f + c] = h;
      out[r * f + c] = gn->values[c] * h + bn->values[c];
    }
  }

  auto backprop = [xn, gn, bn, xhat, inv_std = std::move(inv_std), rows, f,
                   training](TensorNode& self) {
    const double* g = self.grad.data();
    if (gn->requires_grad) {
      ensure_grad(*gn);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
          gn->grad[c] += g[r * f + c] * (*xhat)[r * f + c];
        }
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
          bn->grad[c] += g[r * f + c];
        }
      }
    }
    if (!xn->requires_grad) {
      return;
    }
    ensure_grad(*xn);
    if (!training) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
          xn->grad[r * f + c] += g[r * f + c] * gn->values[c] * inv_std[c];
        }
      }
      return;
    }
    // Train mode: gradients flow through the batch statistics as well.
    std::vector<double> g_mean(f, 0.0);
    std::vector<double> gx_mean(f, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < f; ++c) {
        g_mean[c] += g[r * f + c];
        gx_mean[c] += g[r * f + c] * (*xhat)[r * f + c];
      }
    }
    for (std::size_t c = 0; c < f; ++c) {
      g_mean[c] /= static_cast<double>(rows);
      gx_mean[c] /= static_cast<double>(rows);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < f; ++c) {
        const double centered = g[r * f + c] - g_mean[c] - (*xhat)[r * f + c] * gx_mean[c];
        xn->grad[r * f + c] += gn->values[c] * inv_std[c] * centered;
      }
    }
  };
  return record_op(rows, f, std::move(out), {xn, gn, bn}, std::move(backprop), "batch_norm");
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const auto& xn = node_of(x, "l2_normalize_rows");
  const std::size_t rows = xn->rows;
  const std::size_t cols = xn->cols;
  std::vector<double> norms(rows, 0.0);
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      sq += xn->values[r * cols + c] * xn->values[r * cols + c];
    }
    norms[r] = std::sqrt(sq);
    if (norms[r] >= eps) {
      for (std::size_t c = 0; c < cols; ++c) {
        out[r * cols + c] = xn->values[r * cols + c] / norms[r];
      }
    }
  }
  auto backprop = [xn, norms = std::move(norms), eps, rows, cols](TensorNode& self) {
    if (!xn->requires_grad) {
      return;
    }
    ensure_grad(*xn);
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] < eps) {
        continue;
      }
      const double* g = self.grad.data() + r * cols;
      const double* y = self.values.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        dot += g[c] * y[c];
      }
      for (std::size_t c = 0; c < cols; ++c) {
        xn->grad[r * cols + c] += (g[c] - y[c] * dot) / norms[r];
      }
    }
  };
  return record_op(rows, cols, std::move(out), {xn}, std::move(backprop), "l2_normalize_rows");
}

Tensor log_softmax_rows(const Tensor& x) {
  const auto& xn = node_of(x, "log_softmax_rows");
  const std::size_t rows = xn->rows;
  const std::size_t cols = xn->cols;
  if (cols == 0) {
    throw ShapeError("log_softmax_rows: empty rows");
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xn->values.data() + r * cols;
    double mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) {
      mx = std::max(mx, row[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      sum += std::exp(row[c] - mx);
    }
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = row[c] - lse;
    }
  }
  auto backprop = [xn, rows, cols](TensorNode& self) {
    if (!xn->requires_grad) {
      return;
    }
    ensure_grad(*xn);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * cols;
      const double* y = self.values.data() + r * cols;
      double gsum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        gsum += g[c];
      }
      for (std::size_t c = 0; c < cols; ++c) {
        xn->grad[r * cols + c] += g[c] - std::exp(y[c]) * gsum;
      }
    }
  };
  return record_op(rows, cols, std::move(out), {xn}, std::move(backprop), "log_softmax_rows");
}

Tensor scale(const Tensor& x, double factor) {
  const auto& xn = node_of(x, "scale");
  std::vector<double> out(xn->values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = factor * xn->values[i];
  }
  auto backprop = [xn, factor](TensorNode& self) {
    if (!xn->requires_grad) {
      return;
    }
    ensure_grad(*xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += factor * self.grad[i];
    }
  };
  return record_op(xn->rows, xn->cols, std::move(out), {xn}, std::move(backprop), "scale");
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw ContractError("concat_rows: no inputs");
  }
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  std::size_t cols = 0;
  std::size_t rows = 0;
  for (const Tensor& t : parts) {
    const auto& n = node_of(t, "concat_rows");
    if (nodes.empty()) {
      cols = n->cols;
    } else if (n->cols != cols) {
      throw ShapeError("concat_rows: column counts disagree");
    }
    rows += n->rows;
    nodes.push_back(n);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& n : nodes) {
    out.insert(out.end(), n->values.begin(), n->values.end());
  }
  auto backprop = [nodes, cols](TensorNode& self) {
    std::size_t offset = 0;
    for (const auto& n : nodes) {
      const std::size_t count = n->values.size();
      if (n->requires_grad) {
        ensure_grad(*n);
        for (std::size_t i = 0; i < count; ++i) {
          n->grad[i] += self.grad[offset + i];
        }
      }
      offset += count;
    }
  };
  return record_op(rows, cols, std::move(out), std::move(nodes), std::move(backprop),
                   "concat_rows");
}

Tensor mean_all(const Tensor& x) {
  const auto& xn = node_of(x, "mean_all");
  if (xn->values.empty()) {
    throw ShapeError("mean_all: empty tensor");
  }
  double acc = 0.0;
  for (double v : xn->values) {
    acc += v;
  }
  const double inv = 1.0 / static_cast<double>(xn->values.size());
  auto backprop = [xn, inv](TensorNode& self) {
    if (!xn->requires_grad) {
      return;
    }
    ensure_grad(*xn);
    const double g = self.grad[0] * inv;
    for (double& d : xn->grad) {
      d += g;
    }
  };
  return record_op(1, 1, {acc * inv}, {xn}, std::move(backprop), "mean_all");
}

Tensor sum_all(const Tensor& x) {
  const auto& xn = node_of(x, "sum_all");
  double acc = 0.0;
  for (double v : xn->values) {
    acc += v;
  }
  auto backprop = [xn](TensorNode& self) {
    if (!xn->requires_grad) {
      return;
    }
    ensure_grad(*xn);
    const double g = self.grad[0];
    for (double& d : xn->grad) {
      d += g;
    }
  };
  return record_op(1, 1, {acc}, {xn}, std::move(backprop), "sum_all");
}

}  // namespace suave
