#pragma once

// Regression baselines: Longstaff-Schwartz (regress realised cashflows) and
// Tsitsiklis-Van Roy (regress the value iterate), both on a total-degree
// monomial basis.

#include <Eigen/Core>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/mesh/reward.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/path_set.hpp"
#include "wsm/policy/lower_bound.hpp"

namespace wsm {

/// All monomials x^a with |a| <= degree, ordered by total degree; feature 0
/// is the constant.
class PolyBasis {
 public:
  PolyBasis() = default;
  PolyBasis(std::size_t dim, std::size_t degree) : dim_(dim), degree_(degree) {
    if (dim == 0) throw ConfigError("PolyBasis: dimension must be positive");
    std::vector<unsigned> a(dim, 0);
    for (std::size_t total = 0; total <= degree; ++total) add_exponents(a, 0, total);
  }

  std::size_t dim() const { return dim_; }
  std::size_t degree() const { return degree_; }
  std::size_t size() const { return exponents_.size() / (dim_ ? dim_ : 1); }
  std::span<const unsigned> exponent(std::size_t f) const {
    return std::span<const unsigned>(exponents_).subspan(f * dim_, dim_);
  }

  void evaluate(std::span<const double> x, std::span<double> out) const {
    for (std::size_t f = 0; f < size(); ++f) {
      double v = 1.0;
      const auto e = exponent(f);
      for (std::size_t i = 0; i < dim_; ++i)
        for (unsigned p = 0; p < e[i]; ++p) v *= x[i];
      out[f] = v;
    }
  }

 private:
  // Enumerates exponent vectors of total degree `remaining` over coordinates c..d-1.
  void add_exponents(std::vector<unsigned>& a, std::size_t c, std::size_t remaining) {
    if (c + 1 == dim_) {
      a[c] = static_cast<unsigned>(remaining);
      exponents_.insert(exponents_.end(), a.begin(), a.end());
      a[c] = 0;
      return;
    }
    for (std::size_t k = remaining + 1; k-- > 0;) {
      a[c] = static_cast<unsigned>(k);
      add_exponents(a, c + 1, remaining - k);
    }
    a[c] = 0;
  }

  std::size_t dim_ = 0;
  std::size_t degree_ = 0;
  std::vector<unsigned> exponents_;
};

enum class RegressionMethod { LS, VF };

inline std::string method_name(RegressionMethod m) { return m == RegressionMethod::LS ? "ls" : "vf"; }

struct LeastSquaresFit {
  Eigen::VectorXd coefficients;
  Eigen::Index rank = 0;
};

/// Minimum-norm least-squares solution (the pseudo-inverse solution when X
/// is rank deficient).
inline LeastSquaresFit solve_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  return {cod.solve(y), cod.rank()};
}

/// Per-step fitted continuation beta_l . (phi(x) / scale_l), l = 0..L-1.
struct RegressionPolicy {
  RegressionMethod method = RegressionMethod::LS;
  PolyBasis basis;
  std::vector<Eigen::VectorXd> coefficients;
  /// column scales used for conditioning (coefficients act on scaled features)
  std::vector<Eigen::VectorXd> scales;
  /// steps whose design matrix was rank deficient (minimum-norm solution used)
  std::vector<std::size_t> rank_deficient_steps;
  std::vector<std::string> warnings;
  bool in_the_money_only = false;

  std::size_t steps() const { return coefficients.size(); }

  double operator()(std::size_t l, std::span<const double> x) const {
    std::vector<double> phi(basis.size());
    basis.evaluate(x, phi);
    double v = 0.0;
    for (std::size_t f = 0; f < phi.size(); ++f)
      v += coefficients[l][static_cast<Eigen::Index>(f)] * phi[f] / scales[l][static_cast<Eigen::Index>(f)];
    return v;
  }
};

struct RegressionOptions {
  /// LS only: regress and exercise on in-the-money paths (g_l > 0) only.
  bool in_the_money_only = false;
};

namespace detail {

inline Eigen::MatrixXd design_matrix(const PathSet& paths, std::size_t l, const PolyBasis& basis,
                                     const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(basis.size()));
  std::vector<double> phi(basis.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    basis.evaluate(paths.at(rows[r], l), phi);
    for (std::size_t f = 0; f < phi.size(); ++f)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) = phi[f];
  }
  return x;
}

// Scales columns to unit RMS in place; all-zero columns keep scale 1.
inline Eigen::VectorXd scale_columns(Eigen::MatrixXd& x) {
  Eigen::VectorXd s(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double rms = x.rows() > 0 ? x.col(c).norm() / std::sqrt(static_cast<double>(x.rows())) : 0.0;
    s[c] = rms > 0.0 ? rms : 1.0;
    x.col(c) /= s[c];
  }
  return s;
}

inline RegressionPolicy fit_regression(const PathSet& paths, const RewardFunction& reward,
                                       const PolyBasis& basis, RegressionMethod method,
                                       const RegressionOptions& options) {
  const std::size_t n = paths.paths(), steps = paths.steps();
  if (basis.dim() != paths.dim()) throw ConfigError("regression: basis dimension does not match the paths");
  if (n < basis.size())
    throw ConfigError("regression: need at least as many paths (" + std::to_string(n) + ") as features (" +
                      std::to_string(basis.size()) + ")");
  RegressionPolicy pol;
  pol.method = method;
  pol.basis = basis;
  pol.in_the_money_only = method == RegressionMethod::LS && options.in_the_money_only;
  pol.coefficients.resize(steps);
  pol.scales.resize(steps);

  // LS: realised discounted cashflow; VF: value iterate at step l+1.
  Eigen::VectorXd target(static_cast<Eigen::Index>(n));
  for (std::size_t p = 0; p < n; ++p) target[static_cast<Eigen::Index>(p)] = reward.checked(steps, p, paths.at(p, steps));

  const bool itm = method == RegressionMethod::LS && options.in_the_money_only;
  for (std::size_t l = steps; l-- > 0;) {
    std::vector<double> g(n);
    for (std::size_t p = 0; p < n; ++p) g[p] = reward.checked(l, p, paths.at(p, l));
    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (std::size_t p = 0; p < n; ++p)
      if (!itm || g[p] > 0.0) rows.push_back(p);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(basis.size()));
    if (!rows.empty()) {
      Eigen::MatrixXd x = design_matrix(paths, l, basis, rows);
      scale = scale_columns(x);
      Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) y[static_cast<Eigen::Index>(r)] = target[static_cast<Eigen::Index>(rows[r])];
      const LeastSquaresFit fit = solve_least_squares(x, y);
      beta = fit.coefficients;
      if (fit.rank < x.cols()) {
        pol.rank_deficient_steps.push_back(l);
        pol.warnings.push_back("step " + std::to_string(l) + ": design matrix has rank " + std::to_string(fit.rank) +
                               " < " + std::to_string(x.cols()) + "; minimum-norm solution used");
      }
    }
    if (!beta.allFinite()) throw NumericalError("regression: non-finite coefficients at step " + std::to_string(l));
    pol.coefficients[l] = beta;
    pol.scales[l] = scale;

    for (std::size_t p = 0; p < n; ++p) {
      const auto i = static_cast<Eigen::Index>(p);
      if (itm && !(g[p] > 0.0)) continue;
      const double cont = pol(l, paths.at(p, l));
      if (method == RegressionMethod::LS) {
        if (g[p] >= cont) target[i] = g[p];
      } else {
        target[i] = std::max(g[p], cont);
      }
    }
  }
  return pol;
}

}  // namespace detail

inline RegressionPolicy fit_ls(const PathSet& paths, const RewardFunction& reward, const PolyBasis& basis,
                               const RegressionOptions& options = {}) {
  return detail::fit_regression(paths, reward, basis, RegressionMethod::LS, options);
}

inline RegressionPolicy fit_vf(const PathSet& paths, const RewardFunction& reward, const PolyBasis& basis) {
  return detail::fit_regression(paths, reward, basis, RegressionMethod::VF, {});
}

/// Out-of-sample lower bound of a regression policy. With in-the-money
/// fitting, out-of-the-money states never stop before L.
template <TransitionModel Model>
LowerBoundEstimate evaluate_regression_policy(const RegressionPolicy& policy, const RewardFunction& reward,
                                              const Model& model, std::span<const double> x0, std::size_t n_test,
                                              const SeedRecord& seed) {
  if (!policy.in_the_money_only) return evaluate_policy(policy, reward, model, x0, policy.steps(), n_test, seed);
  auto cont = [&](std::size_t l, std::span<const double> x) {
    return reward(l, x) > 0.0 ? policy(l, x) : kInf;
  };
  return evaluate_policy(cont, reward, model, x0, policy.steps(), n_test, seed);
}

}  // namespace wsm
