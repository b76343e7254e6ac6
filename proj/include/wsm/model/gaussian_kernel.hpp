#pragma once

// Batched evaluation of log-quadratic transition kernels
//
//   log p(y_j | x_m) = target_offset[j] + source_offset[m] - 0.5 * |W_m (ty_j - mu_m)|^2
//
// where ty is a (possibly transformed) target coordinate, mu_m the source mean
// and W_m a lower-triangular whitening matrix. Both the exact lognormal GBM
// density (in log coordinates) and the Euler density have this form. The
// one-target-many-sources and one-source-many-targets sweeps are the inner
// loops of the mesh, so coordinates are stored coordinate-major.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "wsm/core.hpp"

namespace wsm {

struct GaussianSources {
  enum class Form {
    // W_m = scale[m] * I (all dims); scale may be shared.
    Isotropic,
    // full lower-triangular W_m per source, row-major dim*dim blocks.
    PerSource,
  };

  std::size_t count = 0;
  std::size_t dim = 0;
  Form form = Form::Isotropic;
  std::vector<double> mean;    // coordinate-major: mean[c * count + m]
  std::vector<double> scale;   // Isotropic: per-source scale
  std::vector<double> whiten;  // PerSource: whiten[m * dim * dim + r * dim + c]
  std::vector<double> offset;  // per source
  double max_offset = kInf;    // kInf = not known
};

inline void finish_sources(GaussianSources& s) {
  s.max_offset = kNegInf;
  for (double o : s.offset) s.max_offset = std::max(s.max_offset, o);
}

struct GaussianTargets {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> coord;   // coordinate-major: coord[c * count + j]
  std::vector<double> offset;  // per target, may be -inf (density zero)
};

namespace detail {

using ArrayMap = Eigen::Map<const Eigen::ArrayXd>;
using MutArrayMap = Eigen::Map<Eigen::ArrayXd>;

inline double per_source_quad(const GaussianSources& s, std::size_t m,
                              const GaussianTargets& t, std::size_t j) {
  const std::size_t d = s.dim;
  const double* w = s.whiten.data() + m * d * d;
  double q = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c <= r; ++c)
      z += w[r * d + c] * (t.coord[c * t.count + j] - s.mean[c * s.count + m]);
    q += z * z;
  }
  return q;
}

}  // namespace detail

/// out[m] = log p(y_j | x_m) for every source m.
inline void log_density_from_sources(const GaussianTargets& t, std::size_t j,
                                     const GaussianSources& s, std::span<double> out) {
  const auto n = static_cast<Eigen::Index>(s.count);
  detail::MutArrayMap res(out.data(), n);
  const detail::ArrayMap off(s.offset.data(), n);
  if (s.form == GaussianSources::Form::Isotropic) {
    const detail::ArrayMap scale(s.scale.data(), n);
    Eigen::ArrayXd q = Eigen::ArrayXd::Zero(n);
    for (std::size_t c = 0; c < s.dim; ++c) {
      const detail::ArrayMap mu(s.mean.data() + c * s.count, n);
      q += (t.coord[c * t.count + j] - mu).square();
    }
    res = (t.offset[j] + off) - 0.5 * scale.square() * q;
    return;
  }
  for (std::size_t m = 0; m < s.count; ++m)
    out[m] = t.offset[j] + s.offset[m] - 0.5 * detail::per_source_quad(s, m, t, j);
}

/// out[j] = log p(y_j | x_m) for every target j.
inline void log_density_to_targets(const GaussianTargets& t, const GaussianSources& s,
                                   std::size_t m, std::span<double> out) {
  const auto n = static_cast<Eigen::Index>(t.count);
  detail::MutArrayMap res(out.data(), n);
  const detail::ArrayMap toff(t.offset.data(), n);
  if (s.form == GaussianSources::Form::Isotropic) {
    Eigen::ArrayXd q = Eigen::ArrayXd::Zero(n);
    for (std::size_t c = 0; c < s.dim; ++c) {
      const detail::ArrayMap y(t.coord.data() + c * t.count, n);
      q += (y - s.mean[c * s.count + m]).square();
    }
    const double a = 0.5 * s.scale[m] * s.scale[m];
    res = (toff + s.offset[m]) - a * q;
    return;
  }
  for (std::size_t j = 0; j < t.count; ++j)
    out[j] = t.offset[j] + s.offset[m] - 0.5 * detail::per_source_quad(s, m, t, j);
}

/// log sum_m p(y_j | x_m). Since every quadratic form is non-negative the
/// terms are bounded by exp(max source offset); the single fused pass falls
/// back to a max-shifted sum only when everything underflows.
inline double log_sum_from_sources(const GaussianTargets& t, std::size_t j,
                                   const GaussianSources& s, Scratch& scratch) {
  if (t.offset[j] == kNegInf) return kNegInf;
  const auto n = static_cast<Eigen::Index>(s.count);
  if (s.form == GaussianSources::Form::Isotropic && s.dim == 1 && s.max_offset < kInf &&
      s.max_offset > kNegInf) {
    const detail::ArrayMap off(s.offset.data(), n), scale(s.scale.data(), n), mu(s.mean.data(), n);
    const double y = t.coord[j];
    scratch.resize(s.count);
    detail::MutArrayMap e(scratch.data(), n);
    e = ((off - s.max_offset) - 0.5 * scale.square() * (y - mu).square()).exp();
    const double sum = detail::ordered_sum(scratch.data(), s.count);
    if (sum > 1e-280) return t.offset[j] + s.max_offset + std::log(sum);
  }
  scratch.resize(s.count);
  log_density_from_sources(t, j, s, scratch);
  const detail::ArrayMap a(scratch.data(), n);
  const double top = a.maxCoeff();
  if (top == kNegInf) return kNegInf;
  detail::MutArrayMap e(scratch.data(), n);
  e = (a - top).exp();
  return top + std::log(detail::ordered_sum(scratch.data(), s.count));
}

/// Reduces row m of the weight matrix, lambda_j = log p(y_j | x_m) - shift_j,
/// against `values`: returns (sum_j w_j values_j, sum_j w_j) with w the
/// normalised exp(lambda). Mesh rows satisfy lambda <= 0, which lets the
/// fast path skip the max pass. Returns weight_sum 0 if every lambda is -inf.
inline std::pair<double, double> reduce_to_targets(const GaussianTargets& t,
                                                   const GaussianSources& s, std::size_t m,
                                                   std::span<const double> shift,
                                                   std::span<const double> values,
                                                   Scratch& scratch) {
  const auto n = static_cast<Eigen::Index>(t.count);
  scratch.resize(t.count);
  detail::MutArrayMap e(scratch.data(), n);
  const detail::ArrayMap sh(shift.data(), n), toff(t.offset.data(), n);
  double total = 0.0;
  if (s.form == GaussianSources::Form::Isotropic && s.dim == 1) {
    const detail::ArrayMap y(t.coord.data(), n);
    const double a = 0.5 * s.scale[m] * s.scale[m];
    e = ((toff - sh) + s.offset[m] - a * (y - s.mean[m]).square()).exp();
    total = detail::ordered_sum(scratch.data(), t.count);
  }
  if (!(total > 1e-280 && total < 1e280)) {
    log_density_to_targets(t, s, m, scratch);
    e -= sh;
    const double top = e.maxCoeff();
    if (top == kNegInf || std::isnan(top)) return {0.0, 0.0};
    e = (e - top).exp();
    total = detail::ordered_sum(scratch.data(), t.count);
  }
  const double inv = 1.0 / total;
  e *= inv;
  return {detail::ordered_dot(scratch.data(), values.data(), t.count), detail::ordered_sum(scratch.data(), t.count)};
}

}  // namespace wsm
