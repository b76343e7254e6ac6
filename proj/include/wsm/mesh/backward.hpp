#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/mesh/reward.hpp"
#include "wsm/mesh/weights.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/path_set.hpp"

namespace wsm {

/// Ball B_R = {z : |z - x0| <= R}; R = inf disables truncation.
struct TruncationConfig {
  double radius = kInf;

  TruncationConfig() = default;
  explicit TruncationConfig(double r) : radius(r) {
    if (!(r > 0.0)) throw ConfigError("truncation radius must be positive");
  }
  bool contains(std::span<const double> z, std::span<const double> x0) const {
    return radius == kInf || distance(z, x0) <= radius;
  }
};

/// Mesh values U_l(Z_l^n) on the simulated grid plus everything a policy needs
/// to reuse the mesh: per-row continuation values and the CK log-denominators.
/// Matrices are stored step-major: entry (n, l) lives at l * N + n.
class MeshValue {
 public:
  MeshValue() = default;
  MeshValue(std::size_t paths, std::size_t steps, TruncationConfig truncation,
            std::optional<double> cap)
      : paths_(paths), steps_(steps), truncation_(truncation), cap_(cap),
        values_((steps + 1) * paths, 0.0), continuation_(steps * paths, 0.0),
        log_denominators_(steps * paths, 0.0) {}

  std::size_t paths() const { return paths_; }
  std::size_t steps() const { return steps_; }
  double u0() const { return u0_; }
  const TruncationConfig& truncation() const { return truncation_; }
  std::optional<double> cap() const { return cap_; }

  double value(std::size_t n, std::size_t l) const { return values_[l * paths_ + n]; }
  std::span<const double> values_at(std::size_t l) const {
    return std::span<const double>(values_).subspan(l * paths_, paths_);
  }
  /// Estimated E[U_{l+1} | Z_l = Z_l^n] before max/truncation, l < L.
  double continuation(std::size_t n, std::size_t l) const { return continuation_[l * paths_ + n]; }
  std::span<const double> continuation_at(std::size_t l) const {
    return std::span<const double>(continuation_).subspan(l * paths_, paths_);
  }
  /// log D_j for the transition l -> l+1.
  std::span<const double> log_denominators_at(std::size_t l) const {
    return std::span<const double>(log_denominators_).subspan(l * paths_, paths_);
  }

  /// Largest |sum_j w_ij - 1| seen while building the mesh.
  double max_row_sum_error() const { return max_row_sum_error_; }
  /// Transition density evaluations spent (two sweeps per interior step).
  double density_evaluations() const { return density_evaluations_; }

  std::span<double> mutable_values_at(std::size_t l) {
    return std::span<double>(values_).subspan(l * paths_, paths_);
  }
  std::span<double> mutable_continuation_at(std::size_t l) {
    return std::span<double>(continuation_).subspan(l * paths_, paths_);
  }
  std::span<double> mutable_log_denominators_at(std::size_t l) {
    return std::span<double>(log_denominators_).subspan(l * paths_, paths_);
  }
  void set_u0(double v) { u0_ = v; }
  void note_row_sum_error(double e) { max_row_sum_error_ = std::max(max_row_sum_error_, e); }
  void add_density_evaluations(double n) { density_evaluations_ += n; }

  friend bool operator==(const MeshValue& a, const MeshValue& b) {
    return a.paths_ == b.paths_ && a.steps_ == b.steps_ && a.u0_ == b.u0_ &&
           a.truncation_.radius == b.truncation_.radius && a.cap_ == b.cap_ &&
           a.values_ == b.values_ && a.continuation_ == b.continuation_ &&
           a.log_denominators_ == b.log_denominators_;
  }

 private:
  std::size_t paths_ = 0;
  std::size_t steps_ = 0;
  double u0_ = 0.0;
  TruncationConfig truncation_;
  std::optional<double> cap_;
  std::vector<double> values_;
  std::vector<double> continuation_;
  std::vector<double> log_denominators_;
  double max_row_sum_error_ = 0.0;
  double density_evaluations_ = 0.0;
};

struct MeshStepResult {
  std::vector<double> values;
  std::vector<double> continuation;
  double max_row_sum_error = 0.0;
};

/// One backward step l (1 <= l < L): given U_{l+1} on the grid and the
/// log-denominators of transition l -> l+1, returns U_l and the continuation
/// estimates. Pure; backward_induction is a loop over this.
template <TransitionModel Model>
MeshStepResult mesh_step(const PathSet& paths, const Model& model, const RewardFunction& reward,
                         const TruncationConfig& truncation, std::size_t l,
                         std::span<const double> next_values,
                         std::span<const double> log_denominators,
                         const typename Model::Sources* prepared_sources = nullptr,
                         const typename Model::Targets* prepared_targets = nullptr) {
  const std::size_t n_paths = paths.paths();
  std::optional<typename Model::Sources> own_sources;
  std::optional<typename Model::Targets> own_targets;
  if (!prepared_sources) prepared_sources = &own_sources.emplace(model.prepare_sources(paths.step(l)));
  if (!prepared_targets)
    prepared_targets = &own_targets.emplace(model.prepare_targets(paths.step(l + 1)));

  MeshStepResult out;
  out.values.assign(n_paths, 0.0);
  out.continuation.assign(n_paths, 0.0);
  const auto x0 = paths.x0();
  std::exception_ptr failure;
  std::mutex mutex;
  double worst = 0.0;
  const auto count = static_cast<long long>(n_paths);
#pragma omp parallel
  {
    Scratch lambda, scratch;
    double local_worst = 0.0;
#pragma omp for schedule(static)
    for (long long ii = 0; ii < count; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      try {
        const RowReduction r = detail::mesh_row(model, *prepared_targets, *prepared_sources, i,
                                                log_denominators, next_values, lambda, scratch);
        if (r.weight_sum == 0.0)
          throw DegenerateDenominatorError("weight row " + std::to_string(i) + " at step " +
                                           std::to_string(l) + " has no reachable successor");
        local_worst = std::max(local_worst, std::abs(r.weight_sum - 1.0));
        out.continuation[i] = r.continuation;
        const auto z = paths.at(i, l);
        const double g = reward.checked(l, i, z);
        out.values[i] = truncation.contains(z, x0) ? std::max(g, r.continuation) : 0.0;
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
    std::lock_guard lock(mutex);
    worst = std::max(worst, local_worst);
  }
  if (failure) std::rethrow_exception(failure);
  out.max_row_sum_error = worst;
  return out;
}

/// Truncated weighted-mesh dynamic program. Costs O(N^2 L) density
/// evaluations: one sweep for the denominators and one for the rows.
template <TransitionModel Model>
MeshValue backward_induction(const PathSet& paths, const RewardFunction& reward, const Model& model,
                             const TruncationConfig& truncation = {}) {
  const std::size_t n_paths = paths.paths(), steps = paths.steps();
  if (n_paths == 0) throw ConfigError("backward_induction: empty path set");
  if (paths.dim() != model.dim()) throw ConfigError("backward_induction: model/path dimension mismatch");
  MeshValue mesh(n_paths, steps, truncation, reward.cap());
  const auto x0 = paths.x0();

  {
    auto last = mesh.mutable_values_at(steps);
    for (std::size_t n = 0; n < n_paths; ++n) {
      const auto z = paths.at(n, steps);
      const double g = reward.checked(steps, n, z);
      last[n] = truncation.contains(z, x0) ? g : 0.0;
    }
  }
  if (steps == 0) {
    mesh.set_u0(mesh.value(0, 0));
    return mesh;
  }

  for (std::size_t l = steps - 1; l >= 1; --l) {
    const auto sources = model.prepare_sources(paths.step(l));
    const auto targets = model.prepare_targets(paths.step(l + 1));
    auto log_d = mesh.mutable_log_denominators_at(l);
    detail::fill_log_denominators(model, targets, sources, n_paths, log_d);
    MeshStepResult step = mesh_step(paths, model, reward, truncation, l, mesh.values_at(l + 1),
                                    mesh.log_denominators_at(l), &sources, &targets);
    std::copy(step.values.begin(), step.values.end(), mesh.mutable_values_at(l).begin());
    std::copy(step.continuation.begin(), step.continuation.end(),
              mesh.mutable_continuation_at(l).begin());
    mesh.note_row_sum_error(step.max_row_sum_error);
    mesh.add_density_evaluations(2.0 * static_cast<double>(n_paths) * static_cast<double>(n_paths));
  }

  // Root: every parent equals x0, so D_j = N p(Z_1^j | x0) and all weights are 1/N.
  {
    const auto sources = model.prepare_sources(StateView(x0, 1, paths.dim()));
    const auto targets = model.prepare_targets(paths.step(1));
    auto log_d = mesh.mutable_log_denominators_at(0);
    model.log_density_to_targets(targets, sources, 0, log_d);
    const double log_n = std::log(static_cast<double>(n_paths));
    for (std::size_t j = 0; j < n_paths; ++j) {
      if (log_d[j] == kNegInf)
        throw DegenerateDenominatorError("successor " + std::to_string(j) +
                                         " of the root has zero density");
      log_d[j] += log_n;
    }
    const auto next = mesh.values_at(1);
    double sum = 0.0;
    for (double v : next) sum += v;
    const double cont = sum / static_cast<double>(n_paths);
    const double g0 = reward.checked(0, 0, x0);
    const double u0 = std::max(g0, cont);
    auto c0 = mesh.mutable_continuation_at(0);
    auto v0 = mesh.mutable_values_at(0);
    std::fill(c0.begin(), c0.end(), cont);
    std::fill(v0.begin(), v0.end(), u0);
    mesh.set_u0(u0);
    mesh.add_density_evaluations(static_cast<double>(n_paths));
  }
  return mesh;
}

struct MeshInvariantReport {
  std::size_t outside_ball_nonzero = 0;
  std::size_t below_reward = 0;
  std::size_t above_cap = 0;
  double max_row_sum_error = 0.0;
  /// 1 when some weight row missed the sum-to-one tolerance.
  std::size_t row_sum = 0;
  std::size_t violations() const { return outside_ball_nonzero + below_reward + above_cap + row_sum; }
};

/// Checks zero-outside-B_R, U >= g inside B_R and U <= cap for every grid
/// point, and reports the worst weight-row sum error.
inline MeshInvariantReport check_mesh_invariants(const MeshValue& mesh, const PathSet& paths,
                                                 const RewardFunction& reward,
                                                 double row_sum_tolerance = 1e-12) {
  MeshInvariantReport rep;
  const auto x0 = paths.x0();
  for (std::size_t l = 0; l <= mesh.steps(); ++l) {
    for (std::size_t n = 0; n < mesh.paths(); ++n) {
      const auto z = paths.at(n, l);
      const double u = mesh.value(n, l);
      if (!mesh.truncation().contains(z, x0)) {
        if (u != 0.0) ++rep.outside_ball_nonzero;
      } else if (u < reward(l, z)) {
        ++rep.below_reward;
      }
      if (mesh.cap() && u > *mesh.cap() * (1.0 + 1e-12)) ++rep.above_cap;
    }
  }
  rep.max_row_sum_error = mesh.max_row_sum_error();
  if (rep.max_row_sum_error > row_sum_tolerance) rep.row_sum = 1;
  return rep;
}

}  // namespace wsm
