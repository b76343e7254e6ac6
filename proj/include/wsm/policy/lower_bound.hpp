#pragma once

#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/mesh/reward.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/simulate.hpp"

namespace wsm {

struct LowerBoundEstimate {
  double mean = 0.0;
  /// sample standard deviation / sqrt(n_test)
  double std_error = 0.0;
  std::size_t n_test = 0;
  /// histogram[l] = number of test paths stopped at step l, l = 0..L
  std::vector<std::size_t> histogram;
};

/// Out-of-sample value of the rule "stop at the first l with
/// g_l(x) >= continuation(l, x)", the terminal step always stopping.
/// `continuation` only ever sees the current step and state.
///
/// Each test path n uses stream n of `seed`; per-path payoffs are summed in
/// path order afterwards, so the result does not depend on the thread count.
template <TransitionModel Model, class Continuation>
LowerBoundEstimate evaluate_policy(const Continuation& continuation, const RewardFunction& reward,
                                   const Model& model, std::span<const double> x0,
                                   std::size_t steps, std::size_t n_test,
                                   const SeedRecord& seed) {
  if (n_test == 0) throw ConfigError("evaluate_policy: n_test must be positive");
  if (x0.size() != model.dim()) throw ConfigError("evaluate_policy: x0 has wrong dimension");
  std::vector<double> payoff(n_test);
  std::vector<std::size_t> stop(n_test);
  std::exception_ptr failure;
  std::mutex mutex;
  const auto count = static_cast<long long>(n_test);
#pragma omp parallel for schedule(dynamic, 64)
  for (long long nn = 0; nn < count; ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    try {
      PathStream<Model> path(model, x0, seed, n);
      for (std::size_t l = 0;; ++l) {
        const auto x = path.state();
        const double g = reward.checked(l, n, x);
        if (l == steps || g >= continuation(l, x)) {
          payoff[n] = g;
          stop[n] = l;
          break;
        }
        path.advance();
      }
    } catch (...) {
      std::lock_guard lock(mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  LowerBoundEstimate est;
  est.n_test = n_test;
  est.histogram.assign(steps + 1, 0);
  double sum = 0.0;
  for (std::size_t n = 0; n < n_test; ++n) {
    sum += payoff[n];
    ++est.histogram[stop[n]];
  }
  est.mean = sum / static_cast<double>(n_test);
  double ss = 0.0;
  for (double v : payoff) ss += (v - est.mean) * (v - est.mean);
  if (n_test > 1)
    est.std_error = std::sqrt(ss / static_cast<double>(n_test - 1) / static_cast<double>(n_test));
  return est;
}

/// Standard error of a difference of two independent estimates.
inline double combined_std_error(const LowerBoundEstimate& a, const LowerBoundEstimate& b) {
  return std::hypot(a.std_error, b.std_error);
}

}  // namespace wsm
