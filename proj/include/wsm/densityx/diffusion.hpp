#pragma once

// One-dimensional diffusions dX = b(X) dt + sigma(X) dW and the quantities
// of their Lamperti transform U = s(X), s(x) = int_0^x dy / sigma(y):
//
//   bbar   = (b / sigma) o g - (sigma' o g) / 2,   g = s^{-1}
//   rhobar = (bbar^2 + bbar') / 2

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wsm/core.hpp"

namespace wsm {

struct Diffusion1dSpec {
  using Fn = std::function<double(double)>;
  Fn b, db, d2b;                           // d2b optional
  Fn sigma, dsigma, d2sigma, d3sigma;      // d3sigma optional
  double sigma_lower = 0.0, sigma_upper = 0.0;
  /// D with |rhobar| <= D on the region of interest.
  double rho_bound = 0.0;
  /// Optional closed forms of s and s^{-1}; quadrature / root finding otherwise.
  Fn lamperti, lamperti_inverse;
  /// Points where derivatives and sigma bounds are validated.
  std::vector<double> probes = {-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0};
};

struct BarValues {
  double bbar = 0.0;
  double dbbar = 0.0;
  double rhobar = 0.0;
};

class Diffusion1d {
 public:
  using Fn = Diffusion1dSpec::Fn;
  static constexpr double kDerivativeTolerance = 1e-4;

  explicit Diffusion1d(Diffusion1dSpec spec) : s_(std::move(spec)) { validate(); }

  /// sigma constant: s(x) = x / c in closed form.
  static Diffusion1d constant_sigma(Fn b, Fn db, Fn d2b, double c, double rho_bound) {
    Diffusion1dSpec spec;
    spec.b = std::move(b);
    spec.db = std::move(db);
    spec.d2b = std::move(d2b);
    spec.sigma = [c](double) { return c; };
    spec.dsigma = spec.d2sigma = spec.d3sigma = [](double) { return 0.0; };
    spec.sigma_lower = spec.sigma_upper = c;
    spec.rho_bound = rho_bound;
    spec.lamperti = [c](double x) { return x / c; };
    spec.lamperti_inverse = [c](double u) { return u * c; };
    return Diffusion1d(std::move(spec));
  }

  /// Brownian motion with unit diffusion, rhobar = 0.
  static Diffusion1d brownian() {
    auto zero = [](double) { return 0.0; };
    return constant_sigma(zero, zero, zero, 1.0, 0.0);
  }

  /// dX = -theta X dt + dW. rhobar(u) = (theta^2 u^2 - theta) / 2 is unbounded;
  /// `rho_bound` is the bound on the region of interest.
  static Diffusion1d ornstein_uhlenbeck(double theta, double rho_bound) {
    return constant_sigma([theta](double x) { return -theta * x; }, [theta](double) { return -theta; },
                          [](double) { return 0.0; }, 1.0, rho_bound);
  }

  const Diffusion1dSpec& spec() const { return s_; }
  double rho_bound() const { return s_.rho_bound; }
  double sigma_upper() const { return s_.sigma_upper; }
  double sigma_lower() const { return s_.sigma_lower; }
  double sigma(double x) const { return s_.sigma(x); }
  double b(double x) const { return s_.b(x); }

  /// s(x) = int_0^x dy / sigma(y).
  double lamperti(double x) const {
    if (!std::isfinite(x)) throw DomainError("lamperti: x must be finite");
    if (s_.lamperti) return s_.lamperti(x);
    return integrate([this](double y) { return 1.0 / s_.sigma(y); }, x, "lamperti transform");
  }

  /// g = s^{-1}, by bracketed root finding (|error| <= 1e-10).
  double lamperti_inverse(double u) const {
    if (!std::isfinite(u)) throw DomainError("lamperti inverse: u must be finite");
    if (s_.lamperti_inverse) return s_.lamperti_inverse(u);
    if (u == 0.0) return 0.0;
    // s(x) lies between x / sigma_upper and x / sigma_lower
    double lo = u * s_.sigma_lower, hi = u * s_.sigma_upper;
    if (lo > hi) std::swap(lo, hi);
    lo -= 1e-12 * (1.0 + std::abs(lo));
    hi += 1e-12 * (1.0 + std::abs(hi));
    auto f = [&](double x) { return lamperti(x) - u; };
    const double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
      throw DomainError("lamperti inverse: root not bracketed at u = " + std::to_string(u));
    std::uintmax_t iters = 200;
    auto tol = [](double a, double c) { return std::abs(c - a) <= 1e-10; };
    const auto [a, c] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    if (iters >= 200) throw DomainError("lamperti inverse: root finder did not converge");
    return 0.5 * (a + c);
  }

  BarValues bar(double u) const { return bar_at(lamperti_inverse(u)); }

  /// Same as bar(s(x)), without inverting s.
  BarValues bar_at(double x) const {
    const double sg = s_.sigma(x), dsg = s_.dsigma(x), d2sg = s_.d2sigma(x);
    const double bb = s_.b(x), dbb = s_.db(x);
    BarValues v;
    v.bbar = bb / sg - 0.5 * dsg;
    v.dbbar = (dbb * sg - bb * dsg) / sg - 0.5 * sg * d2sg;
    v.rhobar = 0.5 * (v.bbar * v.bbar + v.dbbar);
    return v;
  }

  double rhobar(double u) const { return bar(u).rhobar; }

  /// A(u) = int_0^u bbar(v) dv.
  double bbar_integral(double u) const {
    return integrate([this](double v) { return bar(v).bbar; }, u, "bbar integral");
  }

 private:
  template <class F>
  static double integrate(F f, double upper, const char* what) {
    if (upper == 0.0) return 0.0;
    double err = 0.0;
    const double val = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, upper, 15, 1e-10, &err);
    if (!std::isfinite(val) || err > 1e-8 * std::max(std::abs(val), 1e-300) + 1e-14)
      throw IntegrationError(std::string(what) + ": quadrature did not reach 1e-8 relative accuracy");
    return val;
  }

  void check_derivative(const Fn& f, const Fn& df, const char* name) const {
    for (double x : s_.probes) {
      const double h = 1e-4 * std::max(1.0, std::abs(x));
      const double fd = (f(x + h) - f(x - h)) / (2.0 * h);
      const double given = df(x);
      if (!(std::abs(given - fd) <= kDerivativeTolerance * std::max(1.0, std::abs(fd))))
        throw ConfigError(std::string("Diffusion1d: supplied ") + name + " disagrees with finite differences at x = " +
                          std::to_string(x) + " (" + std::to_string(given) + " vs " + std::to_string(fd) + ")");
    }
  }

  void validate() const {
    if (!s_.b || !s_.db || !s_.sigma || !s_.dsigma || !s_.d2sigma)
      throw ConfigError("Diffusion1d: b, b', sigma, sigma', sigma'' are required");
    if (!(s_.sigma_lower > 0.0) || !(s_.sigma_upper >= s_.sigma_lower))
      throw ConfigError("Diffusion1d: need 0 < sigma_lower <= sigma_upper");
    if (!(s_.rho_bound >= 0.0) || !std::isfinite(s_.rho_bound))
      throw ConfigError("Diffusion1d: rho bound D must be finite and nonnegative");
    for (double x : s_.probes) {
      const double sg = s_.sigma(x);
      if (!(sg >= s_.sigma_lower * (1.0 - 1e-12) && sg <= s_.sigma_upper * (1.0 + 1e-12)))
        throw ConfigError("Diffusion1d: sigma(" + std::to_string(x) + ") = " + std::to_string(sg) +
                          " violates the declared bounds");
    }
    check_derivative(s_.b, s_.db, "b'");
    if (s_.d2b) check_derivative(s_.db, s_.d2b, "b''");
    check_derivative(s_.sigma, s_.dsigma, "sigma'");
    check_derivative(s_.dsigma, s_.d2sigma, "sigma''");
    if (s_.d3sigma) check_derivative(s_.d2sigma, s_.d3sigma, "sigma'''");
  }

  Diffusion1dSpec s_;
};

inline double lamperti_s(const Diffusion1d& diff, double x) { return diff.lamperti(x); }
inline BarValues bar_functions(const Diffusion1d& diff, double u) { return diff.bar(u); }

}  // namespace wsm
