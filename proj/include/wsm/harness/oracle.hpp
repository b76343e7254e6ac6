#pragma once

// Reference value of the discrete stopping problem for the 1D Gaussian walk
// Z_{l+1} = Z_l + sqrt(h) xi by backward induction on a fine grid; the
// conditional expectations are Gaussian convolutions done by the trapezoid
// rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "wsm/core.hpp"

namespace wsm {

struct WalkOracleOptions {
  double spacing = 0.005;
  /// grid half-width in units of sqrt(L h) around x0
  double width = 10.0;
};

/// Snell value at x0 of max over stopping times of E[g_tau(Z_tau)].
/// `reward(l, x)` must vanish (or be negligible) far from x0.
inline double gaussian_walk_snell(const std::function<double(std::size_t, double)>& reward, double x0,
                                  std::size_t steps, double h, const WalkOracleOptions& opt = {}) {
  if (!(h > 0.0) || !(opt.spacing > 0.0)) throw ConfigError("gaussian_walk_snell: bad step or spacing");
  if (steps == 0) return reward(0, x0);
  const double half = opt.width * std::sqrt(static_cast<double>(steps) * h) + 10.0 * std::sqrt(h);
  const auto n = static_cast<std::size_t>(std::ceil(2.0 * half / opt.spacing)) + 1;
  const double lo = x0 - half;
  auto xs = [&](std::size_t i) { return lo + static_cast<double>(i) * opt.spacing; };

  // kernel on grid offsets, cut at 12 standard deviations
  const double sd = std::sqrt(h);
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(12.0 * sd / opt.spacing));
  std::vector<double> kernel(static_cast<std::size_t>(2 * reach + 1));
  for (std::ptrdiff_t k = -reach; k <= reach; ++k) {
    const double z = static_cast<double>(k) * opt.spacing / sd;
    kernel[static_cast<std::size_t>(k + reach)] = std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * kPi)) * opt.spacing;
  }

  std::vector<double> v(n), next(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = reward(steps, xs(i));
  for (std::size_t l = steps; l-- > 1;) {
    for (std::size_t i = 0; i < n; ++i) {
      double c = 0.0;
      const auto ii = static_cast<std::ptrdiff_t>(i);
      const std::ptrdiff_t a = std::max<std::ptrdiff_t>(-reach, -ii);
      const std::ptrdiff_t b = std::min<std::ptrdiff_t>(reach, static_cast<std::ptrdiff_t>(n) - 1 - ii);
      for (std::ptrdiff_t k = a; k <= b; ++k)
        c += kernel[static_cast<std::size_t>(k + reach)] * v[static_cast<std::size_t>(ii + k)];
      next[i] = std::max(reward(l, xs(i)), c);
    }
    v.swap(next);
  }
  // root: continuation at x0 itself
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (xs(i) - x0) / sd;
    const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    c += w * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * kPi)) * opt.spacing * v[i];
  }
  return std::max(reward(0, x0), c);
}

}  // namespace wsm
