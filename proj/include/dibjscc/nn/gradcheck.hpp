#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

namespace dibjscc::nn {

// Central-difference check: perturbs each coordinate of x, re-evaluates the
// scalar function and compares against the supplied analytic gradient.
// Returns the largest relative error over all coordinates.
inline double max_rel_error_fd(const std::function<double()>& scalar_fn,
                               double* x, std::size_t n,
                               const double* analytic_grad, double h = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double keep = x[i];
    const double step = h * std::max(1.0, std::abs(keep));
    x[i] = keep + step;
    const double fp = scalar_fn();
    x[i] = keep - step;
    const double fm = scalar_fn();
    x[i] = keep;
    const double fd = (fp - fm) / (2.0 * step);
    const double a = analytic_grad[i];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

}  // namespace dibjscc::nn
