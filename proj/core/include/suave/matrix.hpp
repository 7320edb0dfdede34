#pragma once

#include <cstddef>
#include <vector>

namespace suave {

// Dense row-major matrix of doubles. The plain (gradient-free) numeric type
// used for datasets, detached logits, assignments and targets.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

// out[m, n] = sum_k a[m, k] * b[k, n]; out must be pre-sized and is overwritten.
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n);

// out[m, n] = sum_k a[m, k] * b[n, k] (second operand transposed).
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n);

// out[m, n] = sum_k a[k, m] * b[k, n] (first operand transposed).
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n);

}  // namespace suave
