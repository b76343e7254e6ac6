#pragma once

// Empirical checks of the growth and Gaussian-domination assumptions under
// which the mesh error bounds hold. Diagnostics only: nothing here throws on
// a violated assumption.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/path_set.hpp"
#include "wsm/rng.hpp"

namespace wsm {

struct AssumptionCheckOptions {
  /// Variance scale of the dominating Gaussian per unit time; <= 0 picks
  /// 2 x the largest sampled eigenvalue of the local covariance.
  double alpha = 0.0;
  /// Domination constant; <= 0 means "report the ratio only".
  double kappa = 0.0;
  std::size_t samples = 2000;
  SeedRecord seed{0x5eed, 0xd1a9};
};

struct AssumptionReport {
  /// Growth constant in E[max_{l' >= l} |Z_l'| | Z_l = x] <= c_Z (1 + |x|).
  double c_z = 0.0;
  std::vector<double> c_z_per_step;
  double alpha = 0.0;
  double kappa = 0.0;
  std::size_t density_samples = 0;
  /// max over sampled (x, y, l) of p_l(y|x) / Gaussian bound.
  double max_density_ratio = 0.0;
  std::size_t density_violations = 0;
  std::vector<std::string> violations;
  /// checks that could not run, e.g. the density check of a degenerate chain
  std::vector<std::string> notes;
};

template <class Model>
concept HasLocalCovariance = requires(const Model& m, std::span<const double> x) {
  { m.local_covariance(x) } -> std::convertible_to<Eigen::MatrixXd>;
};

template <TransitionModel Model>
AssumptionReport check_assumptions(const Model& model, const PathSet& paths,
                                   const AssumptionCheckOptions& options = {}) {
  AssumptionReport report;
  const std::size_t n_paths = paths.paths(), steps = paths.steps(), d = paths.dim();
  if (n_paths == 0) {
    report.violations.push_back("empty path set");
    return report;
  }

  // Growth: regress the running maximum of |Z| on 1 + |Z_l| through the origin.
  std::vector<double> running_max(n_paths, 0.0);
  report.c_z_per_step.assign(steps + 1, 0.0);
  for (std::size_t l = steps + 1; l-- > 0;) {
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t n = 0; n < n_paths; ++n) {
      const double r = norm(paths.at(n, l));
      running_max[n] = std::max(running_max[n], r);
      const double x = 1.0 + r;
      sxy += x * running_max[n];
      sxx += x * x;
    }
    report.c_z_per_step[l] = sxy / sxx;
  }
  report.c_z = *std::max_element(report.c_z_per_step.begin(), report.c_z_per_step.end());
  if (!std::isfinite(report.c_z)) report.violations.push_back("growth constant c_Z is not finite");

  if (steps == 0) return report;

  Engine engine = path_engine(options.seed, 0);
  std::uniform_int_distribution<std::size_t> pick_path(0, n_paths - 1);
  const std::size_t max_lag = model.has_exact_multistep_density() ? steps : 1;
  std::uniform_int_distribution<std::size_t> pick_lag(1, max_lag);

  double alpha = options.alpha;
  if (!(alpha > 0.0)) {
    double top = 0.0;
    if constexpr (HasLocalCovariance<Model>) {
      for (std::size_t s = 0; s < std::min<std::size_t>(options.samples, 200); ++s) {
        std::uniform_int_distribution<std::size_t> pick_step(0, steps);
        const Eigen::MatrixXd cov = model.local_covariance(paths.at(pick_path(engine), pick_step(engine)));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
        top = std::max(top, eig.eigenvalues().maxCoeff());
      }
    }
    alpha = top > 0.0 ? 2.0 * top : 1.0;
  }
  report.alpha = alpha;
  report.kappa = options.kappa;

  const double h = model.step_size();
  for (std::size_t s = 0; s < options.samples; ++s) {
    const std::size_t lag = pick_lag(engine);
    std::uniform_int_distribution<std::size_t> pick_base(0, steps - lag);
    const std::size_t base = pick_base(engine);
    const auto x = paths.at(pick_path(engine), base);
    const auto y = paths.at(pick_path(engine), base + lag);
    double log_p = kNegInf;
    try {
      log_p = model.log_multistep_density(lag, y, x);
    } catch (const DensityError& e) {
      // a point-mass kernel has no density to dominate
      report.notes.push_back(std::string("density check skipped: ") + e.what());
      break;
    } catch (const Error& e) {
      report.violations.push_back(std::string("density evaluation failed: ") + e.what());
      break;
    }
    const double var = alpha * static_cast<double>(lag) * h;
    const double r = distance(x, y);
    const double log_bound = -0.5 * static_cast<double>(d) * std::log(2.0 * kPi * var) - r * r / (2.0 * var);
    const double ratio = std::exp(log_p - log_bound);
    ++report.density_samples;
    report.max_density_ratio = std::max(report.max_density_ratio, ratio);
    if (options.kappa > 0.0 && ratio > options.kappa) ++report.density_violations;
  }
  if (report.density_violations > 0)
    report.violations.push_back(std::to_string(report.density_violations) +
                                " sampled points exceed the Gaussian domination bound");
  return report;
}

}  // namespace wsm
