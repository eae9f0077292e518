#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "latentpath/common.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

// Compares the recorded backward pass of a scalar-valued function against
// central finite differences at `point`. Returns the max over coordinates of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
//
// Only meaningful away from kinks (relu at 0): central differences straddle
// the nondifferentiable point, so callers keep probes off such coordinates.
inline double gradient_check(const std::function<Tensor(const Tensor&)>& fn, Tensor point,
                             double eps) {
  if (eps <= 0.0) throw UsageError("gradient_check: eps must be positive");
  point.set_requires_grad(true);
  point.zero_grad();
  Tensor loss = fn(point);
  if (loss.numel() != 1) throw UsageError("gradient_check: function must be scalar-valued");
  backward(loss);
  std::vector<double> analytic(point.grad().begin(), point.grad().end());

  double max_rel = 0.0;
  NoGradGuard guard;
  auto values = point.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = fn(point).item();
    values[i] = saved - eps;
    const double down = fn(point).item();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      throw NumericError("gradient_check: non-finite derivative at coordinate " +
                         std::to_string(i));
    }
    const double rel = std::abs(analytic[i] - numeric) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace latentpath
