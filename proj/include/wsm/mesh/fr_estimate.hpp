#pragma once

#include <cmath>
#include <cstddef>

#include "wsm/core.hpp"
#include "wsm/mesh/backward.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/path_set.hpp"

namespace wsm {

struct FrEstimate {
  double value = 0.0;       // F_R
  double squared = 0.0;     // F_R^2
  double std_error = 0.0;   // of F_R (delta method)
  std::size_t pairs = 0;
  /// (1 + F_R) / sqrt(N) < 1 for the mesh size N of the path set.
  bool sample_size_adequate = false;
};

/// Monte Carlo estimate of
///   F_R^2 = E[ 1{|Y - x0| <= R} (p(Y | X) / p_{l+1}(Y | x0))^2 ],
/// X ~ Z_l and Y ~ Z_{l+1} independent, using disjoint halves of the paths.
template <TransitionModel Model>
FrEstimate estimate_fr(const PathSet& paths, const Model& model, const TruncationConfig& truncation,
                       std::size_t l) {
  if (l >= paths.steps()) throw ConfigError("estimate_fr: step must satisfy 0 <= l < L");
  if (l + 1 > 1 && !model.has_exact_multistep_density())
    throw CapabilityError("estimate_fr needs the exact multi-step density of the chain");
  const std::size_t half = paths.paths() / 2;
  if (half == 0) throw ConfigError("estimate_fr: need at least two paths");
  const auto x0 = paths.x0();

  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < half; ++k) {
    const auto x = paths.at(k, l);
    const auto y = paths.at(half + k, l + 1);
    double term = 0.0;
    if (truncation.contains(y, x0)) {
      const double log_ratio =
          model.log_density(y, x) - model.log_multistep_density(l + 1, y, x0);
      term = std::exp(2.0 * log_ratio);
    }
    const double delta = term - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (term - mean);
  }
  FrEstimate est;
  est.pairs = half;
  est.squared = mean;
  est.value = std::sqrt(mean);
  const double se_sq = half > 1 ? std::sqrt(m2 / static_cast<double>(half - 1) / static_cast<double>(half)) : 0.0;
  est.std_error = est.value > 0.0 ? se_sq / (2.0 * est.value) : 0.0;
  est.sample_size_adequate = (1.0 + est.value) / std::sqrt(static_cast<double>(paths.paths())) < 1.0;
  return est;
}

}  // namespace wsm
