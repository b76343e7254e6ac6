#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/model/gaussian_kernel.hpp"
#include "wsm/rng.hpp"

namespace wsm {

/// dX = b(X) dt + sigma(X) dW with X in R^d, W in R^m. Coefficients depend on
/// the state only.
struct SdeModel {
  using Drift = std::function<void(std::span<const double> x, std::span<double> out)>;
  /// Writes sigma(x) as a row-major d x m matrix.
  using Diffusion = std::function<void(std::span<const double> x, std::span<double> out)>;

  std::size_t dim = 1;
  std::size_t noise_dim = 1;
  Drift drift;
  Diffusion diffusion;
  /// Declared Lipschitz constants, reported by diagnostics only.
  std::optional<double> drift_lipschitz;
  std::optional<double> diffusion_lipschitz;
};

/// Euler-Maruyama discretisation of an SdeModel on a grid of width h. The
/// one-step density is Gaussian with mean x + b(x) h and covariance
/// h sigma(x) sigma(x)^T.
class EulerChain {
 public:
  using Sources = GaussianSources;
  using Targets = GaussianTargets;

  EulerChain(SdeModel sde, double step_size) : sde_(std::move(sde)), h_(step_size) {
    if (!(h_ > 0.0) || !std::isfinite(h_)) throw ConfigError("EulerChain: step size must be positive");
    if (sde_.dim == 0 || sde_.noise_dim == 0) throw ConfigError("EulerChain: zero dimension");
    if (!sde_.drift || !sde_.diffusion) throw ConfigError("EulerChain: drift and diffusion are required");
  }

  std::size_t dim() const { return sde_.dim; }
  std::size_t noise_dim() const { return sde_.noise_dim; }
  double step_size() const { return h_; }
  bool has_exact_multistep_density() const { return false; }
  const SdeModel& sde() const { return sde_; }

  void drift(std::span<const double> x, std::span<double> out) const { sde_.drift(x, out); }

  Eigen::MatrixXd diffusion(std::span<const double> x) const {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s(
        static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(noise_dim()));
    sde_.diffusion(x, std::span<double>(s.data(), static_cast<std::size_t>(s.size())));
    return s;
  }

  /// Sigma(x) = sigma sigma^T per unit time.
  Eigen::MatrixXd local_covariance(std::span<const double> x) const {
    const Eigen::MatrixXd s = diffusion(x);
    return s * s.transpose();
  }

  void advance(std::span<const double> x, std::span<const double> z, std::span<double> out) const {
    const std::size_t d = dim(), m = noise_dim();
    std::vector<double> b(d), s(d * m);
    sde_.drift(x, b);
    sde_.diffusion(x, s);
    const double sq = std::sqrt(h_);
    for (std::size_t i = 0; i < d; ++i) {
      double shock = 0.0;
      for (std::size_t k = 0; k < m; ++k) shock += s[i * m + k] * z[k];
      out[i] = x[i] + b[i] * h_ + sq * shock;
    }
  }

  void sample_step(std::span<const double> x, Engine& engine, std::span<double> out) const {
    std::vector<double> z(noise_dim());
    fill_normals(engine, z);
    advance(x, z, out);
  }

  double log_density(std::span<const double> y, std::span<const double> x) const {
    const Local loc = local(x);
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::VectorXd diff(d);
    for (Eigen::Index i = 0; i < d; ++i) diff[i] = y[i] - loc.mean[i];
    const Eigen::VectorXd z = loc.whiten.triangularView<Eigen::Lower>() * diff;
    return loc.offset - 0.5 * z.squaredNorm();
  }

  double log_multistep_density(std::size_t l, std::span<const double> y,
                               std::span<const double> x0) const {
    if (l == 1) return log_density(y, x0);
    throw CapabilityError(
        "EulerChain has no closed-form multi-step density; use the Chapman-Kolmogorov mesh estimate");
  }

  Sources prepare_sources(StateView xs) const {
    const std::size_t n = xs.count(), d = dim();
    Sources s;
    s.count = n;
    s.dim = d;
    s.mean.assign(n * d, 0.0);
    s.offset.assign(n, 0.0);
    std::vector<Local> locals;
    locals.reserve(n);
    bool isotropic = true;
    for (std::size_t m = 0; m < n; ++m) {
      locals.push_back(local(xs.point(m)));
      const auto& w = locals.back().whiten;
      if (d > 1 && !w.isDiagonal(0.0)) isotropic = false;
      if (d > 1 && isotropic) {
        for (Eigen::Index i = 1; i < w.rows(); ++i)
          if (w(i, i) != w(0, 0)) isotropic = false;
      }
    }
    s.form = isotropic ? Sources::Form::Isotropic : Sources::Form::PerSource;
    if (isotropic) s.scale.assign(n, 0.0);
    else s.whiten.assign(n * d * d, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
      const Local& loc = locals[m];
      for (std::size_t i = 0; i < d; ++i) s.mean[i * n + m] = loc.mean[static_cast<Eigen::Index>(i)];
      s.offset[m] = loc.offset;
      if (isotropic) {
        s.scale[m] = loc.whiten(0, 0);
      } else {
        for (std::size_t r = 0; r < d; ++r)
          for (std::size_t c = 0; c < d; ++c)
            s.whiten[m * d * d + r * d + c] =
                loc.whiten(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
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
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < d; ++i) t.coord[i * n + j] = ys(j, i);
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
  struct Local {
    Eigen::VectorXd mean;
    Eigen::MatrixXd whiten;  // inverse Cholesky factor of h Sigma(x)
    double offset = 0.0;     // -d/2 log(2 pi) - log det(chol)
  };

  Local local(std::span<const double> x) const {
    const std::size_t d = dim();
    Local loc;
    std::vector<double> b(d);
    sde_.drift(x, b);
    loc.mean.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      loc.mean[static_cast<Eigen::Index>(i)] = x[i] + b[i] * h_;
    }
    if (!all_finite(b)) throw DensityError("EulerChain: drift is not finite");
    const Eigen::MatrixXd cov = h_ * local_covariance(x);
    if (!cov.allFinite()) throw DensityError("EulerChain: diffusion is not finite");
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::MatrixXd l = llt.matrixL();
    bool ok = llt.info() == Eigen::Success;
    double log_det = 0.0;
    for (Eigen::Index i = 0; ok && i < l.rows(); ++i) {
      if (!(l(i, i) > 1e-150)) ok = false;
      else log_det += std::log(l(i, i));
    }
    if (!ok) throw DensityError("EulerChain: diffusion covariance is singular at the source state");
    loc.whiten = l.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(l.rows(), l.cols()));
    loc.offset = -0.5 * static_cast<double>(d) * kLogTwoPi - log_det;
    return loc;
  }

  SdeModel sde_;
  double h_;
};

}  // namespace wsm
