#include "wtslab/grad_check.hpp"

#include <cmath>
#include <string>

#include "wtslab/common.hpp"

namespace wtslab {

std::vector<double> finite_diff_gradient(const LossFn& loss, std::vector<double> params,
                                         double h) {
  std::vector<double> grad(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const double p0 = params[i];
    params[i] = p0 + h;
    const double up = loss(params);
    params[i] = p0 - h;
    const double down = loss(params);
    params[i] = p0;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_gradient: non-finite loss at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                     double floor) {
  if (analytic.size() != numeric.size()) throw NumericError("max_rel_error: length mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    if (std::fabs(analytic[i]) <= floor) continue;
    const double denom = std::max(std::fabs(analytic[i]), std::fabs(numeric[i]));
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace wtslab
