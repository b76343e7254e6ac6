#pragma once

// Small-time expansion of the transition density of a 1D diffusion,
//
//   p(y|x) = (2 pi D)^{-1/2} sigma(y)^{-1} exp(-(s(y) - s(x))^2 / (2 D))
//            exp(A(s(y)) - A(s(x))) E[exp(-D I)],
//   I = int_0^1 rhobar(s(x) + z (s(y) - s(x)) + sqrt(D) B_z) dz,
//
// with B a standard Brownian bridge, D the time step and A' = bbar. Expanding
// the expectation gives p^n = prefactor * sum_{k<=n} D^k c_k / k!,
// c_k = (-1)^k E[I^k].

#include <boost/math/special_functions/lambert_w.hpp>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/densityx/diffusion.hpp"
#include "wsm/rng.hpp"

namespace wsm {

/// Largest step with step * D * exp(step * D) <= 1/2.
inline double expansion_step_limit(double rho_bound) {
  if (rho_bound <= 0.0) return kInf;
  return boost::math::lambert_w0(0.5) / rho_bound;
}

/// M Brownian bridges on the uniform grid z_i = i / (G - 1), row-major M x G.
class BridgeBank {
 public:
  BridgeBank() = default;
  BridgeBank(std::size_t count, std::size_t grid, std::uint64_t seed) : count_(count), grid_(grid) {
    if (grid < 2) throw ConfigError("bridge grid needs at least two points");
    values_.assign(count * grid, 0.0);
    const double dz = 1.0 / static_cast<double>(grid - 1);
    const double sdz = std::sqrt(dz);
    const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(static)
    for (long long bb = 0; bb < n; ++bb) {
      const auto b = static_cast<std::size_t>(bb);
      Engine eng = path_engine(SeedRecord{seed, 0xB41D6Eu}, b);
      std::normal_distribution<double> normal(0.0, 1.0);
      double* row = values_.data() + b * grid;
      double w = 0.0;
      for (std::size_t i = 1; i < grid; ++i) {
        w += sdz * normal(eng);
        row[i] = w;
      }
      for (std::size_t i = 1; i < grid; ++i) row[i] -= static_cast<double>(i) * dz * w;
      row[grid - 1] = 0.0;
    }
  }

  std::size_t count() const { return count_; }
  std::size_t grid() const { return grid_; }
  std::span<const double> bridge(std::size_t b) const {
    return std::span<const double>(values_).subspan(b * grid_, grid_);
  }

 private:
  std::size_t count_ = 0;
  std::size_t grid_ = 0;
  std::vector<double> values_;
};

namespace detail {

/// I_b for every bridge: trapezoid rule in z of rhobar along the bridge from
/// ux to uy with variance scale step.
inline std::vector<double> bridge_integrals(const Diffusion1d& diff, double ux, double uy, double step,
                                            const BridgeBank& bank) {
  const std::size_t g = bank.grid();
  const double dz = 1.0 / static_cast<double>(g - 1);
  const double sq = std::sqrt(step);
  const double end_terms = 0.5 * (diff.rhobar(ux) + diff.rhobar(uy));
  std::vector<double> out(bank.count());
  const auto n = static_cast<long long>(bank.count());
#pragma omp parallel for schedule(static)
  for (long long bb = 0; bb < n; ++bb) {
    const auto br = bank.bridge(static_cast<std::size_t>(bb));
    double s = end_terms;
    for (std::size_t i = 1; i + 1 < g; ++i) {
      const double z = static_cast<double>(i) * dz;
      s += diff.rhobar(ux + z * (uy - ux) + sq * br[i]);
    }
    out[static_cast<std::size_t>(bb)] = s * dz;
  }
  return out;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(std::span<const double> v) {
  MeanSe r;
  if (v.empty()) return r;
  double m = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double x : v) {
    ++k;
    const double d = x - m;
    m += d / static_cast<double>(k);
    m2 += d * (x - m);
  }
  r.mean = m;
  if (k > 1) r.se = std::sqrt(m2 / static_cast<double>(k - 1) / static_cast<double>(k));
  return r;
}

}  // namespace detail

struct CkEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// c_k(x, y) = (-1)^k E[I^k] from `bridges` fresh bridges (c_0 = 1 exactly).
inline CkEstimate estimate_ck(const Diffusion1d& diff, double x, double y, double step, std::size_t k,
                              std::size_t bridges, std::uint64_t seed, std::size_t grid = 64) {
  if (bridges < 1) throw ConfigError("estimate_ck: need at least one bridge");
  if (!(step > 0.0)) throw ConfigError("estimate_ck: step must be positive");
  if (grid < 64) throw ConfigError("estimate_ck: bridge grid needs at least 64 points");
  if (k == 0) return {1.0, 0.0};
  const BridgeBank bank(bridges, grid, seed);
  auto ints = detail::bridge_integrals(diff, diff.lamperti(x), diff.lamperti(y), step, bank);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  for (double& v : ints) v = sign * std::pow(v, static_cast<double>(k));
  const auto ms = detail::mean_se(ints);
  return {ms.mean, ms.se};
}

struct ExpansionOptions {
  std::size_t order = 3;          // n
  double step = 0.05;             // Delta
  std::size_t bridges = 100000;   // M
  std::size_t grid = 64;          // bridge z-grid
  std::uint64_t seed = 1;
};

/// Value of p^n at one (x, y) with its Monte Carlo standard error, plus the
/// coefficient estimates c_0..c_n.
struct ExpansionValue {
  double density = 0.0;
  double std_error = 0.0;
  double log_prefactor = 0.0;
  /// partial[k] = sum_{j<=k} step^j c_j / j!
  std::vector<double> partial;
  std::vector<double> partial_se;
  std::vector<double> ck;
  std::vector<double> ck_se;
};

/// p^n(y | x) for a fixed step. All (x, y) pairs and all orders share one
/// bank of bridges, so p^n is a smooth deterministic function of (x, y) once
/// the bank is drawn.
class ExpansionDensity {
 public:
  ExpansionDensity(const Diffusion1d& diff, ExpansionOptions options)
      : diff_(&diff), opt_(options), step_limit_(expansion_step_limit(diff.rho_bound())) {
    if (!(opt_.step > 0.0)) throw ConfigError("expansion step must be positive");
    if (!(opt_.step < step_limit_))
      throw ExpansionRegimeError("expansion step " + std::to_string(opt_.step) + " is not below Delta_0 = " +
                                 std::to_string(step_limit_) + " for D = " + std::to_string(diff.rho_bound()));
    if (opt_.bridges < 1) throw ConfigError("expansion needs at least one bridge");
    if (opt_.grid < 64) throw ConfigError("bridge grid needs at least 64 points");
    bank_ = BridgeBank(opt_.bridges, opt_.grid, opt_.seed);
  }

  const Diffusion1d& diffusion() const { return *diff_; }
  const ExpansionOptions& options() const { return opt_; }
  std::size_t order() const { return opt_.order; }
  double step() const { return opt_.step; }
  double step_limit() const { return step_limit_; }

  /// Full evaluation up to order `order` (defaults to the configured n).
  ExpansionValue evaluate(double y, double x, std::size_t order) const {
    const double ux = diff_->lamperti(x), uy = diff_->lamperti(y);
    return evaluate_lamperti(uy, ux, order, std::log(diff_->sigma(y)));
  }
  ExpansionValue evaluate(double y, double x) const { return evaluate(y, x, opt_.order); }

  double density(double y, double x) const { return evaluate(y, x).density; }
  double log_density(double y, double x) const {
    const auto v = evaluate(y, x);
    return v.log_prefactor + std::log(v.partial.back());
  }

  /// Density of s(Y) at uy given s(X) = ux (no sigma(y) Jacobian).
  ExpansionValue evaluate_lamperti(double uy, double ux, std::size_t order, double log_sigma_y = 0.0) const {
    const double d = opt_.step;
    ExpansionValue out;
    out.log_prefactor = -0.5 * (kLogTwoPi + std::log(d)) - log_sigma_y - (uy - ux) * (uy - ux) / (2.0 * d) +
                        diff_->bbar_integral(uy) - diff_->bbar_integral(ux);
    const auto ints = detail::bridge_integrals(*diff_, ux, uy, d, bank_);
    const std::size_t m = ints.size();
    out.partial.assign(order + 1, 0.0);
    out.partial_se.assign(order + 1, 0.0);
    out.ck.assign(order + 1, 0.0);
    out.ck_se.assign(order + 1, 0.0);
    out.ck[0] = 1.0;
    std::vector<double> term(m, 1.0), sum(m, 1.0), power(m, 1.0);
    out.partial[0] = 1.0;
    double fact = 1.0;
    for (std::size_t k = 1; k <= order; ++k) {
      fact *= static_cast<double>(k);
      for (std::size_t b = 0; b < m; ++b) {
        power[b] *= -ints[b];
        sum[b] += std::pow(d, static_cast<double>(k)) * power[b] / fact;
      }
      const auto c = detail::mean_se(power);
      out.ck[k] = c.mean;
      out.ck_se[k] = c.se;
      const auto s = detail::mean_se(sum);
      out.partial[k] = s.mean;
      out.partial_se[k] = s.se;
    }
    if (!(out.partial[order] > 0.0))
      throw DensityError("expansion series is not positive; the step is outside the expansion regime");
    const double pre = std::exp(out.log_prefactor);
    out.density = pre * out.partial[order];
    out.std_error = pre * out.partial_se[order];
    return out;
  }

 private:
  const Diffusion1d* diff_;
  ExpansionOptions opt_;
  double step_limit_;
  BridgeBank bank_;
};

inline double density_pn(const ExpansionDensity& exp, double y, double x) { return exp.density(y, x); }

struct DecayReport {
  /// delta[n] = max over probes of |p^{n+1} - p^n| / p^{n+1}, n = 0..n_max-1
  std::vector<double> delta;
  std::vector<double> delta_se;
  /// ratio[n] = delta[n+1] / delta[n] (0 when delta[n] = 0)
  std::vector<double> ratio;
  /// step * D
  double bound = 0.0;
  /// bound * (1 + 3 relative SE of the ratio), per ratio
  std::vector<double> allowed;
  std::size_t violations = 0;
  bool passed() const { return violations == 0; }
};

/// Checks that successive truncations of the series shrink geometrically
/// with ratio at most step * D (up to Monte Carlo noise).
inline DecayReport ratio_decay_check(const ExpansionDensity& exp, std::size_t n_max,
                                     std::span<const std::pair<double, double>> probes) {
  if (n_max < 1) throw ConfigError("ratio_decay_check: n_max must be at least 1");
  if (probes.empty()) throw ConfigError("ratio_decay_check: need at least one probe");
  DecayReport rep;
  rep.bound = exp.step() * exp.diffusion().rho_bound();
  rep.delta.assign(n_max, 0.0);
  rep.delta_se.assign(n_max, 0.0);
  double fact = 1.0;
  std::vector<double> facts(n_max + 1, 1.0);
  for (std::size_t k = 1; k <= n_max; ++k) facts[k] = (fact *= static_cast<double>(k));
  for (const auto& [x, y] : probes) {
    const auto v = exp.evaluate(y, x, n_max);
    for (std::size_t n = 0; n < n_max; ++n) {
      const double scale = std::pow(exp.step(), static_cast<double>(n + 1)) / facts[n + 1];
      const double denom = std::abs(v.partial[n + 1]);
      const double d = scale * std::abs(v.ck[n + 1]) / denom;
      if (d > rep.delta[n]) {
        rep.delta[n] = d;
        rep.delta_se[n] = scale * v.ck_se[n + 1] / denom;
      }
    }
  }
  for (std::size_t n = 0; n + 1 < n_max; ++n) {
    double r = 0.0, rel = 0.0;
    if (rep.delta[n] > 0.0) {
      r = rep.delta[n + 1] / rep.delta[n];
      const double a = rep.delta[n + 1] > 0.0 ? rep.delta_se[n + 1] / rep.delta[n + 1] : 0.0;
      const double b = rep.delta_se[n] / rep.delta[n];
      rel = std::hypot(a, b);
    }
    rep.ratio.push_back(r);
    rep.allowed.push_back(rep.bound * (1.0 + 3.0 * rel));
    if (r > rep.allowed.back()) ++rep.violations;
  }
  return rep;
}

struct SampleResult {
  std::vector<double> samples;
  double acceptance_rate = 0.0;
  double envelope_constant = 0.0;
  std::size_t proposals = 0;
};

namespace detail {

struct Envelope {
  double mean = 0.0, sd = 0.0, kappa = 0.0;
  double log_q(double v) const {
    const double z = (v - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * kLogTwoPi;
  }
};

inline Envelope build_envelope(const ExpansionDensity& exp, double ux) {
  const Diffusion1d& diff = exp.diffusion();
  const double d = exp.step();
  const BarValues bv = diff.bar(ux);
  const double shrink = 1.0 - d * bv.dbbar;
  const double tau2 = 1.1 * std::max(1.0, shrink > 0.0 ? 1.0 / shrink : 1.0);
  Envelope env{ux + bv.bbar * d, std::sqrt(tau2 * d), 0.0};
  double worst = 0.0;
  constexpr int kGrid = 121;
  for (int i = 0; i < kGrid; ++i) {
    const double v = env.mean + env.sd * (-6.0 + 12.0 * i / (kGrid - 1));
    const auto f = exp.evaluate_lamperti(v, ux, exp.order());
    worst = std::max(worst, std::exp(f.log_prefactor - env.log_q(v)) * f.partial.back());
  }
  env.kappa = 1.5 * worst;
  return env;
}

// One accepted draw of s(Y) given s(X) = ux.
inline double draw_lamperti(const ExpansionDensity& exp, const Envelope& env, double ux, Engine& eng,
                            std::size_t& proposals) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    ++proposals;
    const double v = env.mean + env.sd * normal(eng);
    const double u = uniform01(eng);
    const auto f = exp.evaluate_lamperti(v, ux, exp.order());
    const double ratio = std::exp(f.log_prefactor - env.log_q(v)) * f.partial.back() / env.kappa;
    if (ratio > 1.0)
      throw EnvelopeError("acceptance-rejection envelope violated at s(y) = " + std::to_string(v) +
                          "; recompute the envelope constant");
    if (u <= ratio) return v;
  }
}

}  // namespace detail

/// i.i.d. draws from p^n(. | x) / int p^n by acceptance-rejection with a
/// Gaussian proposal in Lamperti coordinates.
inline SampleResult sample_pn(const ExpansionDensity& exp, double x, std::size_t count, std::uint64_t seed) {
  SampleResult res;
  if (count == 0) return res;
  const double ux = exp.diffusion().lamperti(x);
  const auto env = detail::build_envelope(exp, ux);
  res.envelope_constant = env.kappa;
  Engine eng = path_engine(SeedRecord{seed, 0x5A4D1Eu}, 0);
  res.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    res.samples.push_back(exp.diffusion().lamperti_inverse(detail::draw_lamperti(exp, env, ux, eng, res.proposals)));
  res.acceptance_rate = static_cast<double>(count) / static_cast<double>(res.proposals);
  return res;
}

}  // namespace wsm
