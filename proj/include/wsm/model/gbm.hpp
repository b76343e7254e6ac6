#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/model/gaussian_kernel.hpp"
#include "wsm/rng.hpp"

namespace wsm {

/// Geometric Brownian motion observed on a uniform grid of width h:
///   X_{t+h} = X_t * exp((r - delta - sigma^2/2) h + sigma sqrt(h) Z)
/// per coordinate, with an optional correlation matrix between the driving
/// Brownian motions. The chain has exact one-step and l-step lognormal
/// densities.
class GbmModel {
 public:
  using Sources = GaussianSources;
  using Targets = GaussianTargets;

  GbmModel(double rate, double dividend, std::vector<double> sigma, double step_size,
           std::optional<Eigen::MatrixXd> correlation = std::nullopt)
      : rate_(rate), dividend_(dividend), sigma_(std::move(sigma)), h_(step_size) {
    const auto d = static_cast<Eigen::Index>(sigma_.size());
    if (d == 0) throw ConfigError("GbmModel: empty volatility vector");
    if (!(h_ > 0.0) || !std::isfinite(h_)) throw ConfigError("GbmModel: step size must be positive");
    for (double s : sigma_)
      if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("GbmModel: volatilities must be positive");

    Eigen::MatrixXd corr = correlation.value_or(Eigen::MatrixXd::Identity(d, d));
    if (corr.rows() != d || corr.cols() != d) throw ConfigError("GbmModel: correlation has wrong shape");
    Eigen::MatrixXd cov(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) cov(a, b) = sigma_[a] * corr(a, b) * sigma_[b];
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("GbmModel: correlation matrix is not positive definite");
    chol_ = llt.matrixL();
    chol_inv_ = chol_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
    log_det_chol_ = 0.0;
    for (Eigen::Index a = 0; a < d; ++a) log_det_chol_ += std::log(chol_(a, a));
  }

  std::size_t dim() const { return sigma_.size(); }
  std::size_t noise_dim() const { return sigma_.size(); }
  double step_size() const { return h_; }
  double rate() const { return rate_; }
  double dividend() const { return dividend_; }
  std::span<const double> sigma() const { return sigma_; }
  bool has_exact_multistep_density() const { return true; }

  /// Log-drift per unit time of coordinate i.
  double log_drift(std::size_t i) const { return rate_ - dividend_ - 0.5 * sigma_[i] * sigma_[i]; }

  void advance(std::span<const double> x, std::span<const double> z, std::span<double> out) const {
    const std::size_t d = dim();
    const double sq = std::sqrt(h_);
    for (std::size_t a = 0; a < d; ++a) {
      double shock = 0.0;
      for (std::size_t b = 0; b <= a; ++b) shock += chol_(a, b) * z[b];
      out[a] = x[a] * std::exp(log_drift(a) * h_ + sq * shock);
    }
  }

  void sample_step(std::span<const double> x, Engine& engine, std::span<double> out) const {
    std::vector<double> z(noise_dim());
    fill_normals(engine, z);
    advance(x, z, out);
  }

  double log_density(std::span<const double> y, std::span<const double> x) const {
    return log_multistep_density(1, y, x);
  }

  /// Exact lognormal density of X_{l h} given X_0 = x0.
  double log_multistep_density(std::size_t l, std::span<const double> y,
                               std::span<const double> x0) const {
    if (l == 0) throw ConfigError("GbmModel: multistep density needs l >= 1");
    const std::size_t d = dim();
    const double t = static_cast<double>(l) * h_;
    double log_jac = 0.0;
    Eigen::VectorXd diff(static_cast<Eigen::Index>(d));
    for (std::size_t a = 0; a < d; ++a) {
      if (!(x0[a] > 0.0)) throw DensityError("GbmModel: source state must be positive");
      if (!(y[a] > 0.0)) return kNegInf;
      const double ly = std::log(y[a]);
      log_jac -= ly;
      diff[a] = ly - std::log(x0[a]) - log_drift(a) * t;
    }
    const Eigen::VectorXd z = chol_inv_.triangularView<Eigen::Lower>() * diff / std::sqrt(t);
    return log_jac - 0.5 * static_cast<double>(d) * (kLogTwoPi + std::log(t)) - log_det_chol_ -
           0.5 * z.squaredNorm();
  }

  /// Covariance of dX per unit time at x (diag(sigma x) R diag(sigma x)).
  Eigen::MatrixXd local_covariance(std::span<const double> x) const {
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd cov = chol_ * chol_.transpose();
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) cov(a, b) *= x[a] * x[b];
    return cov;
  }

  Sources prepare_sources(StateView xs) const {
    const std::size_t n = xs.count(), d = dim();
    Sources s;
    s.count = n;
    s.dim = d;
    s.form = Sources::Form::Isotropic;
    s.mean.assign(n * d, 0.0);
    s.scale.assign(n, 1.0);
    s.offset.assign(n, 0.0);
    const double inv_sq = 1.0 / std::sqrt(h_);
    for (std::size_t m = 0; m < n; ++m) {
      for (std::size_t a = 0; a < d; ++a) {
        if (!(xs(m, a) > 0.0)) throw DensityError("GbmModel: source state must be positive");
      }
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b <= a; ++b)
          acc += chol_inv_(a, b) * (std::log(xs(m, b)) + log_drift(b) * h_);
        s.mean[a * n + m] = acc * inv_sq;
      }
    }
    finish_sources(s);
    return s;
  }

  Targets prepare_targets(StateView ys) const {
    const std::size_t n = ys.count(), d = dim();
    Targets t;
    t.count = n;
    t.dim = d;
    t.coord.assign(n * d, 0.0);
    t.offset.assign(n, 0.0);
    const double norm =
        -0.5 * static_cast<double>(d) * (kLogTwoPi + std::log(h_)) - log_det_chol_;
    const double inv_sq = 1.0 / std::sqrt(h_);
    std::vector<double> ly(d);
    for (std::size_t j = 0; j < n; ++j) {
      bool positive = true;
      double log_jac = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        if (!(ys(j, a) > 0.0)) {
          positive = false;
          break;
        }
        ly[a] = std::log(ys(j, a));
        log_jac -= ly[a];
      }
      if (!positive) {
        t.offset[j] = kNegInf;
        continue;
      }
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b <= a; ++b) acc += chol_inv_(a, b) * ly[b];
        t.coord[a * n + j] = acc * inv_sq;
      }
      t.offset[j] = norm + log_jac;
    }
    return t;
  }

  void log_density_from_sources(const Targets& t, std::size_t j, const Sources& s,
                                std::span<double> out) const {
    wsm::log_density_from_sources(t, j, s, out);
  }
  void log_density_to_targets(const Targets& t, const Sources& s, std::size_t m,
                              std::span<double> out) const {
    wsm::log_density_to_targets(t, s, m, out);
  }
  double log_sum_from_sources(const Targets& t, std::size_t j, const Sources& s,
                              Scratch& scratch) const {
    return wsm::log_sum_from_sources(t, j, s, scratch);
  }
  std::pair<double, double> reduce_to_targets(const Targets& t, const Sources& s, std::size_t m,
                                              std::span<const double> shift,
                                              std::span<const double> values,
                                              Scratch& scratch) const {
    return wsm::reduce_to_targets(t, s, m, shift, values, scratch);
  }

 private:
  double rate_;
  double dividend_;
  std::vector<double> sigma_;
  double h_;
  Eigen::MatrixXd chol_;
  Eigen::MatrixXd chol_inv_;
  double log_det_chol_ = 0.0;
};

}  // namespace wsm
