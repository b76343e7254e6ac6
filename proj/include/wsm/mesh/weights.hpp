#pragma once

// Likelihood weights of the stochastic mesh,
//
//   w_ij = p(Z_{l+1}^j | Z_l^i) / D_j,   D_j = sum_m p(Z_{l+1}^j | Z_l^m),
//
// evaluated in log space. D_j is the Chapman-Kolmogorov estimate of
// N p_{l+1}(Z_{l+1}^j | x0) and is shared by every row i.

#include <Eigen/Core>
#include <cmath>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/path_set.hpp"

namespace wsm {

struct WeightRow {
  /// lambda_j = log p(Z_{l+1}^j | Z_l^i) - log D_j
  std::vector<double> log_numerators;
  /// w_j, normalised to sum to one.
  std::vector<double> weights;
};

/// Outcome of reducing one weight row against next-step values.
struct RowReduction {
  double continuation = 0.0;
  double weight_sum = 0.0;
};

namespace detail {

/// log sum_m exp(v_m), with v_m = -inf contributing zero.
inline double log_sum_exp(std::span<const double> v) {
  const Eigen::Map<const Eigen::ArrayXd> a(v.data(), static_cast<Eigen::Index>(v.size()));
  const double top = a.maxCoeff();
  if (top == kNegInf) return kNegInf;
  const Eigen::ArrayXd e = (a - top).exp();
  return top + std::log(ordered_sum(e.data(), v.size()));
}

/// Normalises exp(lambda) into weights in place of `scratch` and reduces
/// against `next_values`. Returns nullopt-like weight_sum = 0 when every
/// lambda is -inf.
inline RowReduction reduce_row(std::span<const double> lambda, std::span<const double> next_values,
                               std::span<double> scratch) {
  const auto n = static_cast<Eigen::Index>(lambda.size());
  const Eigen::Map<const Eigen::ArrayXd> lam(lambda.data(), n);
  const Eigen::Map<const Eigen::ArrayXd> u(next_values.data(), n);
  Eigen::Map<Eigen::ArrayXd> w(scratch.data(), n);
  const double top = lam.maxCoeff();
  if (top == kNegInf) return {};
  w = (lam - top).exp();
  w /= ordered_sum(w.data(), lambda.size());
  return {ordered_dot(w.data(), u.data(), lambda.size()), ordered_sum(w.data(), lambda.size())};
}

/// Models may provide fused versions of the two mesh sweeps.
template <class Model>
concept FusedSweeps = requires(const Model& m, const typename Model::Targets& t,
                               const typename Model::Sources& s, std::size_t i,
                               std::span<const double> v, Scratch& buf) {
  { m.log_sum_from_sources(t, i, s, buf) } -> std::convertible_to<double>;
  { m.reduce_to_targets(t, s, i, v, v, buf) } -> std::convertible_to<std::pair<double, double>>;
};

template <TransitionModel Model>
double log_denominator(const Model& model, const typename Model::Targets& targets, std::size_t j,
                       const typename Model::Sources& sources, Scratch& buf) {
  if constexpr (FusedSweeps<Model>) {
    return model.log_sum_from_sources(targets, j, sources, buf);
  } else {
    model.log_density_from_sources(targets, j, sources, buf);
    return log_sum_exp(buf);
  }
}

/// Row i of the mesh weights reduced against `next_values`.
template <TransitionModel Model>
RowReduction mesh_row(const Model& model, const typename Model::Targets& targets,
                      const typename Model::Sources& sources, std::size_t i,
                      std::span<const double> log_denominators,
                      std::span<const double> next_values, Scratch& lambda,
                      Scratch& scratch) {
  if constexpr (FusedSweeps<Model>) {
    const auto [cont, sum] =
        model.reduce_to_targets(targets, sources, i, log_denominators, next_values, scratch);
    return {cont, sum};
  } else {
    const std::size_t n = log_denominators.size();
    lambda.resize(n);
    scratch.resize(n);
    model.log_density_to_targets(targets, sources, i, lambda);
    for (std::size_t j = 0; j < n; ++j) lambda[j] -= log_denominators[j];
    return reduce_row(lambda, next_values, scratch);
  }
}

template <TransitionModel Model>
void fill_log_denominators(const Model& model, const typename Model::Targets& targets,
                           const typename Model::Sources& sources, std::size_t source_count,
                           std::span<double> out) {
  const auto count = static_cast<long long>(out.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
#pragma omp parallel
  {
    Scratch buf(source_count);
#pragma omp for schedule(static)
    for (long long jj = 0; jj < count; ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      try {
        const double v = log_denominator(model, targets, j, sources, buf);
        if (v == kNegInf || std::isnan(v))
          throw DegenerateDenominatorError(
              "Chapman-Kolmogorov denominator vanishes for successor " + std::to_string(j) +
              ": no current mesh point reaches it (model inconsistency)");
        out[j] = v;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// log D_j, j = 1..N, for the transition l -> l+1.
template <TransitionModel Model>
std::vector<double> ck_denominators(const PathSet& paths, const Model& model, std::size_t l) {
  if (l >= paths.steps()) throw ConfigError("ck_denominators: step must satisfy 0 <= l < L");
  const auto sources = model.prepare_sources(paths.step(l));
  const auto targets = model.prepare_targets(paths.step(l + 1));
  std::vector<double> out(paths.paths());
  detail::fill_log_denominators(model, targets, sources, paths.paths(), out);
  return out;
}

/// Weight row i of transition l, given the precomputed log-denominators.
template <TransitionModel Model>
WeightRow weight_row(const PathSet& paths, const Model& model, std::size_t l, std::size_t i,
                     std::span<const double> log_denominators) {
  if (l >= paths.steps()) throw ConfigError("weight_row: step must satisfy 0 <= l < L");
  if (i >= paths.paths()) throw ConfigError("weight_row: row index out of range");
  if (log_denominators.size() != paths.paths())
    throw ConfigError("weight_row: denominator vector has wrong length");
  const auto sources = model.prepare_sources(StateView(paths.at(i, l), 1, paths.dim()));
  const auto targets = model.prepare_targets(paths.step(l + 1));
  WeightRow row;
  row.log_numerators.resize(paths.paths());
  model.log_density_to_targets(targets, sources, 0, row.log_numerators);
  for (std::size_t j = 0; j < paths.paths(); ++j) row.log_numerators[j] -= log_denominators[j];
  row.weights.resize(paths.paths());
  std::vector<double> zeros(paths.paths(), 0.0);
  const RowReduction r = detail::reduce_row(row.log_numerators, zeros, row.weights);
  if (r.weight_sum == 0.0)
    throw DegenerateDenominatorError("weight row " + std::to_string(i) + " at step " +
                                     std::to_string(l) + " has no reachable successor");
  return row;
}

}  // namespace wsm
