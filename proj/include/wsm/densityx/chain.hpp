#pragma once

// The expansion density as the transition kernel of a 1D chain, so small
// mesh experiments can run on approximated densities. Every density
// evaluation costs a pass over the bridge bank, so this is only practical
// for small meshes.

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/densityx/expansion.hpp"
#include "wsm/rng.hpp"

namespace wsm {

class ExpansionChain {
 public:
  struct Sources {
    std::vector<double> x;
  };
  struct Targets {
    std::vector<double> y;
  };

  explicit ExpansionChain(const ExpansionDensity& density) : density_(&density) {}

  std::size_t dim() const { return 1; }
  double step_size() const { return density_->step(); }
  bool has_exact_multistep_density() const { return false; }

  double log_density(std::span<const double> y, std::span<const double> x) const {
    return density_->log_density(y[0], x[0]);
  }
  double log_multistep_density(std::size_t l, std::span<const double> y, std::span<const double> x0) const {
    if (l == 1) return log_density(y, x0);
    throw CapabilityError("ExpansionChain has no multi-step density beyond one step");
  }

  Sources prepare_sources(StateView xs) const {
    return {std::vector<double>(xs.data().begin(), xs.data().end())};
  }
  Targets prepare_targets(StateView ys) const {
    return {std::vector<double>(ys.data().begin(), ys.data().end())};
  }
  void log_density_from_sources(const Targets& t, std::size_t j, const Sources& s, std::span<double> out) const {
    for (std::size_t m = 0; m < s.x.size(); ++m) out[m] = density_->log_density(t.y[j], s.x[m]);
  }
  void log_density_to_targets(const Targets& t, const Sources& s, std::size_t m, std::span<double> out) const {
    for (std::size_t j = 0; j < t.y.size(); ++j) out[j] = density_->log_density(t.y[j], s.x[m]);
  }

  /// One draw from p^n(. | x) by acceptance-rejection.
  void sample_step(std::span<const double> x, Engine& engine, std::span<double> out) const {
    const double ux = density_->diffusion().lamperti(x[0]);
    const auto env = detail::build_envelope(*density_, ux);
    std::size_t proposals = 0;
    out[0] = density_->diffusion().lamperti_inverse(detail::draw_lamperti(*density_, env, ux, engine, proposals));
  }

 private:
  const ExpansionDensity* density_;
};

}  // namespace wsm
