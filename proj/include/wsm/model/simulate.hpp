#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/path_set.hpp"
#include "wsm/rng.hpp"

namespace wsm {

/// Generates a single trajectory step by step from its own stream. Produces
/// the same states as path `index` of simulate_paths with the same record.
template <TransitionModel Model>
class PathStream {
 public:
  PathStream(const Model& model, std::span<const double> x0, const SeedRecord& seed,
             std::size_t index)
      : model_(&model), engine_(path_engine(seed, index)), index_(index),
        state_(x0.begin(), x0.end()), next_(x0.size()) {}

  std::span<const double> state() const { return state_; }
  std::size_t step() const { return step_; }

  /// Advances to the next exercise date.
  void advance() {
    model_->sample_step(state_, engine_, next_);
    ++step_;
    if (!all_finite(next_))
      throw SimulationError("non-finite state on path " + std::to_string(index_) + " at step " +
                            std::to_string(step_));
    state_.swap(next_);
  }

 private:
  const Model* model_;
  Engine engine_;
  std::size_t index_;
  std::size_t step_ = 0;
  std::vector<double> state_;
  std::vector<double> next_;
};

template <TransitionModel Model>
PathSet simulate_paths(const Model& model, std::span<const double> x0, std::size_t steps,
                       std::size_t paths, const SeedRecord& seed) {
  if (paths == 0) throw ConfigError("simulate_paths: need at least one path");
  if (x0.size() != model.dim()) throw ConfigError("simulate_paths: x0 has wrong dimension");
  if (!all_finite(x0)) throw ConfigError("simulate_paths: x0 must be finite");

  PathSet out(paths, steps, std::vector<double>(x0.begin(), x0.end()), model.step_size(), seed);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto count = static_cast<long long>(paths);
#pragma omp parallel for schedule(static)
  for (long long n = 0; n < count; ++n) {
    try {
      PathStream<Model> stream(model, x0, seed, static_cast<std::size_t>(n));
      for (std::size_t l = 1; l <= steps; ++l) {
        stream.advance();
        auto dst = out.at(static_cast<std::size_t>(n), l);
        std::copy(stream.state().begin(), stream.state().end(), dst.begin());
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace wsm
