#pragma once

#include <functional>
#include <vector>

namespace wtslab {

using LossFn = std::function<double(const std::vector<double>&)>;

/// Central-difference gradient oracle: (f(p + h e_i) - f(p - h e_i)) / (2h)
/// per coordinate. Non-finite evaluations raise a numeric error naming the
/// offending coordinate. Default h chosen for double precision so the O(h^2)
/// truncation error clears the 1e-4 gradient-check tolerance.
std::vector<double> finite_diff_gradient(const LossFn& loss, std::vector<double> params,
                                         double h = 1e-5);

/// Elementwise relative-error comparison used by every gradient check:
/// max over coordinates with |analytic| > floor of
/// |analytic - numeric| / max(|analytic|, |numeric|).
double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                     double floor = 1e-8);

}  // namespace wtslab
