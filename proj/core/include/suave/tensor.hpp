#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "suave/matrix.hpp"

namespace suave {

namespace detail {

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // reads own grad, accumulates into parents
};

}  // namespace detail

// Handle to a node of the implicit reverse-mode tape. Every tensor is a
// rows x cols matrix; scalars are 1x1 and vectors are 1xN rows. Recorded
// (non-leaf) tensors are immutable; leaves (parameters, buffers) may be
// mutated between tape lifetimes through mutable_values().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor from_values(std::size_t rows, std::size_t cols, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor from_matrix(const Matrix& m, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  bool requires_grad() const;

  const std::vector<double>& values() const;
  double value_at(std::size_t r, std::size_t c) const;
  double scalar_value() const;  // 1x1 tensors only
  Matrix to_matrix() const;

  // Leaf-only mutable access; recorded tensors throw ContractError.
  std::vector<double>& mutable_values();

  // Gradient populated by the last backward(); empty span when absent.
  std::span<const double> grad() const;
  bool has_grad() const;
  void clear_grad();

  // Copy of the values with no tape history.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  friend class TapeBuilder;
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// While alive, newly built ops record no tape (outputs have requires_grad
// false). Used for teacher and target-producing forwards.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Runs reverse-mode accumulation from a scalar loss. Every reachable node is
// visited exactly once in reverse topological order; afterwards the tape is
// released (parent links and closures cleared) while leaf gradients remain.
void backward(const Tensor& loss);

// ---- ops ----

// a (m x k) times b (k x n), or times b^T when transpose_b (b is n x k).
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Same shape, or b a 1 x n row broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);

// Elementwise product, same shape.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);

// Train mode normalizes by batch statistics (biased variance) and, when
// update_running is set, folds them into the running buffers with
// running = momentum * running + (1 - momentum) * batch. Eval mode uses the
// running buffers. Train mode requires at least 2 rows.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, bool update_running,
                  double momentum = 0.9, double eps = 1e-5);

// Rows scaled to unit Euclidean norm; rows with norm below eps are left zero.
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// Rowwise x - logsumexp(x), stabilized by the row max.
Tensor log_softmax_rows(const Tensor& x);

Tensor scale(const Tensor& x, double factor);

// Vertical concatenation; all inputs share the column count.
Tensor concat_rows(std::span<const Tensor> parts);

// Mean / sum over all entries, returned as 1x1.
Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

}  // namespace suave
