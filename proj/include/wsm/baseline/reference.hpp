#pragma once

// Reference pricers for the put benchmark.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wsm/core.hpp"

namespace wsm {

/// Cox-Ross-Rubinstein tree for the American put with continuous dividend
/// yield `dividend`.
inline double binomial_american_put(double s0, double strike, double rate, double sigma, double dividend,
                                    double maturity, std::size_t steps) {
  if (steps < 1) throw ConfigError("binomial tree needs at least one step");
  if (!(sigma > 0.0) || !(maturity > 0.0) || !(s0 > 0.0))
    throw ConfigError("binomial tree needs S0 > 0, sigma > 0 and T > 0");
  const double dt = maturity / static_cast<double>(steps);
  const double up = std::exp(sigma * std::sqrt(dt));
  const double down = 1.0 / up;
  const double p = (std::exp((rate - dividend) * dt) - down) / (up - down);
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("binomial tree: risk-neutral probability outside (0, 1)");
  const double disc = std::exp(-rate * dt);
  const double pu = disc * p, pd = disc * (1.0 - p);
  const double up2 = up * up;

  std::vector<double> v(steps + 1);
  {
    double s = s0 * std::pow(down, static_cast<double>(steps));
    for (std::size_t j = 0; j <= steps; ++j, s *= up2) v[j] = std::max(strike - s, 0.0);
  }
  for (std::size_t i = steps; i-- > 0;) {
    double s = s0 * std::pow(down, static_cast<double>(i));
    for (std::size_t j = 0; j <= i; ++j, s *= up2)
      v[j] = std::max(pu * v[j + 1] + pd * v[j], strike - s);
  }
  return v[0];
}

namespace detail {
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct BlackScholesTerms {
  double d1, d2, disc_s, disc_k;
};
inline BlackScholesTerms black_scholes_terms(double s0, double strike, double rate, double sigma,
                                             double dividend, double maturity) {
  if (!(sigma > 0.0) || !(maturity > 0.0) || !(s0 > 0.0))
    throw ConfigError("Black-Scholes needs S0 > 0, sigma > 0 and T > 0");
  const double sd = sigma * std::sqrt(maturity);
  const double d1 = (std::log(s0 / strike) + (rate - dividend + 0.5 * sigma * sigma) * maturity) / sd;
  return {d1, d1 - sd, s0 * std::exp(-dividend * maturity), strike * std::exp(-rate * maturity)};
}
}  // namespace detail

/// European put, continuous dividend yield.
inline double black_scholes_put(double s0, double strike, double rate, double sigma, double dividend,
                                double maturity) {
  if (strike <= 0.0) return 0.0;
  const auto t = detail::black_scholes_terms(s0, strike, rate, sigma, dividend, maturity);
  return t.disc_k * detail::normal_cdf(-t.d2) - t.disc_s * detail::normal_cdf(-t.d1);
}

inline double black_scholes_call(double s0, double strike, double rate, double sigma, double dividend,
                                 double maturity) {
  if (strike <= 0.0) return s0 * std::exp(-dividend * maturity) - strike * std::exp(-rate * maturity);
  const auto t = detail::black_scholes_terms(s0, strike, rate, sigma, dividend, maturity);
  return t.disc_s * detail::normal_cdf(t.d1) - t.disc_k * detail::normal_cdf(t.d2);
}

}  // namespace wsm
