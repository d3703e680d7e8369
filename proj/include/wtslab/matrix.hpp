#pragma once

#include <cstddef>
#include <vector>

namespace wtslab {

/// Dense row-major matrix of IEEE doubles. Minimal surface: the model
/// kernels mostly run hand-written loops, this exists for batch storage and
/// the handful of places that want real matrix products.
struct DenseMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }
  bool empty() const { return data.empty(); }
};

/// C = A * B. Dimension mismatch is a numeric error.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// Max |a-b| over entries; shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

/// Relative Frobenius-norm distance ||a-b||_F / max(||a||_F, eps).
double rel_frobenius_diff(const DenseMatrix& a, const DenseMatrix& b);

/// True when every entry is finite.
bool all_finite(const DenseMatrix& m);
bool all_finite(const std::vector<double>& v);

}  // namespace wtslab
