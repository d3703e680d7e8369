#include "wtslab/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "wtslab/common.hpp"

namespace wtslab {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) throw NumericError("matmul: inner dimensions differ");
  DenseMatrix c(a.rows, b.cols, 0.0);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw NumericError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

double rel_frobenius_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw NumericError("rel_frobenius_diff: shape mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    num += d * d;
    den += a.data[i] * a.data[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

bool all_finite(const DenseMatrix& m) { return all_finite(m.data); }

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace wtslab
