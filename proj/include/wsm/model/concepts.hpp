#pragma once

#include <concepts>
#include <cstddef>
#include <span>

#include "wsm/core.hpp"
#include "wsm/rng.hpp"

namespace wsm {

/// A time-homogeneous Markov chain with a one-step transition density.
///
/// `prepare_sources` / `prepare_targets` precompute whatever per-point data
/// the density needs so that the two batched sweeps used by the mesh cost
/// O(count) cheap operations each.
template <class M>
concept TransitionModel = requires(const M& model, StateView view, std::span<const double> p,
                                   std::span<double> out, Engine& engine,
                                   const typename M::Sources& sources,
                                   const typename M::Targets& targets, std::size_t index) {
  { model.dim() } -> std::convertible_to<std::size_t>;
  { model.step_size() } -> std::convertible_to<double>;
  { model.has_exact_multistep_density() } -> std::convertible_to<bool>;
  { model.log_density(p, p) } -> std::convertible_to<double>;
  { model.log_multistep_density(index, p, p) } -> std::convertible_to<double>;
  { model.prepare_sources(view) } -> std::same_as<typename M::Sources>;
  { model.prepare_targets(view) } -> std::same_as<typename M::Targets>;
  model.log_density_from_sources(targets, index, sources, out);
  model.log_density_to_targets(targets, sources, index, out);
  model.sample_step(p, engine, out);
};

}  // namespace wsm
