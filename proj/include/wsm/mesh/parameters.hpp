#pragma once

// Theory-driven choice of the truncation radius R and mesh size N for a
// target accuracy eps. Both error terms of the bound are set to eps / 2.

#include <cmath>
#include <cstddef>
#include <sstream>

#include "wsm/core.hpp"

namespace wsm {

struct ProblemConstants {
  double alpha = 1.0;   // Gaussian-domination variance scale
  double kappa = 1.0;   // Gaussian-domination constant
  double c_g = 1.0;     // reward growth
  double c_z = 1.0;     // chain growth
  double x0_norm = 0.0; // |x0|
};

struct MeshParameters {
  double radius = 0.0;
  /// Unrounded N_eps; `paths` is its ceiling.
  double paths_exact = 0.0;
  std::size_t paths = 0;
};

/// Argument of the logarithm shared by R_eps and N_eps.
inline double parameter_log_argument(double eps, std::size_t d, std::size_t steps,
                                     const ProblemConstants& c) {
  const double dd = static_cast<double>(d), ll = static_cast<double>(steps);
  const double growth = 1.0 + c.c_z + c.c_z * c.x0_norm + c.c_z * std::sqrt(dd * c.alpha * ll);
  return ll * c.c_g * c.kappa * growth * std::pow(2.0, 1.0 + dd / 4.0) / eps;
}

/// `proportionality` multiplies the asymptotic N_eps (default 1).
inline MeshParameters select_parameters(double eps, std::size_t d, std::size_t steps,
                                        const ProblemConstants& c, double proportionality = 1.0) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterSelectionError("accuracy must lie in (0, 1)");
  if (d == 0 || steps == 0) throw ParameterSelectionError("dimension and step count must be positive");
  if (!(c.alpha > 0.0 && c.kappa > 0.0 && c.c_g > 0.0 && c.c_z > 0.0 && c.x0_norm >= 0.0) ||
      !(proportionality > 0.0))
    throw ParameterSelectionError("problem constants must be positive");
  const double arg = parameter_log_argument(eps, d, steps, c);
  if (!(arg > 1.0)) {
    std::ostringstream msg;
    msg << "log argument " << arg << " <= 1: accuracy " << eps
        << " is too coarse for these constants; choose a smaller accuracy";
    throw ParameterSelectionError(msg.str());
  }
  const double dd = static_cast<double>(d), ll = static_cast<double>(steps);
  const double lg = std::log(arg);
  MeshParameters p;
  p.radius = std::sqrt(8.0 * c.alpha * ll) * std::sqrt(lg);
  p.paths_exact = proportionality * c.alpha * c.c_g * c.c_g * c.kappa *
                  std::pow(8.0 * std::exp(1.0) / dd, dd / 2.0) * std::pow(ll, dd / 2.0 + 3.0) /
                  (eps * eps) * std::pow(lg, dd / 2.0 + 1.0);
  p.paths = static_cast<std::size_t>(std::ceil(p.paths_exact));
  return p;
}

}  // namespace wsm
