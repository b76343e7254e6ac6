#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>

#include "wsm/core.hpp"

namespace wsm {

/// Nonnegative rewards g_l(x), l = 0..L. Discounting, when wanted, is folded
/// in by the factory functions.
class RewardFunction {
 public:
  using Fn = std::function<double(std::size_t l, std::span<const double> x)>;

  RewardFunction() = default;
  explicit RewardFunction(Fn fn, double growth_constant = std::numeric_limits<double>::quiet_NaN(),
                          std::optional<double> cap = std::nullopt)
      : fn_(std::move(fn)), growth_(growth_constant), cap_(cap) {}

  double operator()(std::size_t l, std::span<const double> x) const { return fn_(l, x); }

  /// Evaluates and validates g_l at path n.
  double checked(std::size_t l, std::size_t n, std::span<const double> x) const {
    const double g = fn_(l, x);
    if (!std::isfinite(g) || g < 0.0)
      throw RewardError("reward is " + std::to_string(g) + " at step " + std::to_string(l) +
                        ", path " + std::to_string(n) + "; rewards must be finite and nonnegative");
    return g;
  }

  /// c_g with max_l g_l(x) <= c_g (1 + |x|); NaN if unknown.
  double growth_constant() const { return growth_; }
  /// Known bound sup_{l,x} g_l(x), used as the G_R cap.
  std::optional<double> cap() const { return cap_; }

 private:
  Fn fn_;
  double growth_ = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> cap_;
};

namespace detail {
inline double coordinate_mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}
}  // namespace detail

/// e^{-r l h} (K - mean(x))^+. For d = 1 this is the vanilla put.
inline RewardFunction put_reward(double strike, double rate, double step_size) {
  return RewardFunction(
      [=](std::size_t l, std::span<const double> x) {
        return std::exp(-rate * static_cast<double>(l) * step_size) *
               std::max(strike - detail::coordinate_mean(x), 0.0);
      },
      std::max(strike, 0.0), std::max(strike, 0.0));
}

/// e^{-r l h} (mean(x) - K)^+.
inline RewardFunction call_reward(double strike, double rate, double step_size) {
  return RewardFunction(
      [=](std::size_t l, std::span<const double> x) {
        return std::exp(-rate * static_cast<double>(l) * step_size) *
               std::max(detail::coordinate_mean(x) - strike, 0.0);
      },
      1.0 + std::max(-strike, 0.0));
}

/// max(height - |x|, 0) at every date; the test problem with a known grid
/// solution for the Gaussian walk.
inline RewardFunction tent_reward(double height) {
  return RewardFunction(
      [=](std::size_t, std::span<const double> x) { return std::max(height - norm(x), 0.0); },
      std::max(height, 0.0), std::max(height, 0.0));
}

/// Pays only at the final date L.
inline RewardFunction terminal_only(RewardFunction inner, std::size_t final_step) {
  auto cap = inner.cap();
  auto growth = inner.growth_constant();
  return RewardFunction(
      [inner = std::move(inner), final_step](std::size_t l, std::span<const double> x) {
        return l == final_step ? inner(l, x) : 0.0;
      },
      growth, cap);
}

}  // namespace wsm
