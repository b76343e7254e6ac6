#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wsm/baseline/reference.hpp"
#include "wsm/baseline/regression.hpp"
#include "wsm/core.hpp"
#include "wsm/densityx/chain.hpp"
#include "wsm/densityx/diffusion.hpp"
#include "wsm/densityx/expansion.hpp"
#include "wsm/harness/config.hpp"
#include "wsm/harness/oracle.hpp"
#include "wsm/harness/results.hpp"
#include "wsm/harness/stats.hpp"
#include "wsm/mesh/backward.hpp"
#include "wsm/mesh/parameters.hpp"
#include "wsm/mesh/reward.hpp"
#include "wsm/model/diagnostics.hpp"
#include "wsm/model/euler.hpp"
#include "wsm/model/gbm.hpp"
#include "wsm/model/simulate.hpp"
#include "wsm/policy/continuation.hpp"
#include "wsm/policy/lower_bound.hpp"

namespace wsm {

inline RewardFunction make_reward(const ExperimentConfig& c) {
  const double h = c.step_size();
  const double r = c.discount_rate();
  if (c.reward.payoff == "put") return put_reward(c.reward.strike, r, h);
  if (c.reward.payoff == "call") return call_reward(c.reward.strike, r, h);
  return tent_reward(c.reward.height);
}

inline SdeModel make_sde(const ModelConfig& m) {
  SdeModel sde;
  sde.dim = sde.noise_dim = m.dim();
  const DriftConfig dr = m.drift;
  if (dr.kind == "zero") {
    sde.drift = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    sde.drift_lipschitz = 0.0;
  } else if (dr.kind == "ou") {
    sde.drift = [dr](std::span<const double> x, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = -dr.theta * x[i];
    };
    sde.drift_lipschitz = std::abs(dr.theta);
  } else {
    sde.drift = [dr](std::span<const double> x, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = dr.a + dr.b * x[i];
    };
    sde.drift_lipschitz = std::abs(dr.b);
  }
  const double v = m.diffusion.value;
  const std::size_t d = m.dim();
  sde.diffusion = [v, d](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) out[i * d + i] = v;
  };
  sde.diffusion_lipschitz = 0.0;
  return sde;
}

inline Diffusion1d make_diffusion1d(const ModelConfig& m) {
  const DriftConfig dr = m.drift;
  auto zero = [](double) { return 0.0; };
  Diffusion1d::Fn b = zero, db = zero;
  if (dr.kind == "ou") {
    b = [dr](double x) { return -dr.theta * x; };
    db = [dr](double) { return -dr.theta; };
  } else if (dr.kind == "linear") {
    b = [dr](double x) { return dr.a + dr.b * x; };
    db = [dr](double) { return dr.b; };
  }
  return Diffusion1d::constant_sigma(b, db, zero, m.diffusion.value, m.expansion.rho_bound);
}

/// Calls f(model) with the chain described by the config.
template <class F>
decltype(auto) with_model(const ExperimentConfig& c, F&& f) {
  const double h = c.step_size();
  if (c.model.kind == "gbm") {
    std::optional<Eigen::MatrixXd> corr;
    if (c.model.correlation) {
      const auto& rows = *c.model.correlation;
      const auto d = static_cast<Eigen::Index>(c.model.dim());
      if (static_cast<Eigen::Index>(rows.size()) != d) throw ConfigError(c.source + ": correlation must be d x d");
      Eigen::MatrixXd m(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != d)
          throw ConfigError(c.source + ": correlation must be d x d");
        for (Eigen::Index k = 0; k < d; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      }
      corr = m;
    }
    const GbmModel model(c.model.rate, c.model.dividend, c.model.sigma, h, corr);
    return f(model);
  }
  if (c.model.density == "expansion") {
    const Diffusion1d diff = make_diffusion1d(c.model);
    ExpansionOptions opt;
    opt.order = c.model.expansion.order;
    opt.step = h;
    opt.bridges = c.model.expansion.bridges;
    opt.seed = c.model.expansion.seed;
    const ExpansionDensity density(diff, opt);
    const ExpansionChain model(density);
    return f(model);
  }
  const EulerChain model(make_sde(c.model), h);
  return f(model);
}

struct ExperimentOutcome {
  std::vector<ResultRow> rows;
  std::optional<MeshInvariantReport> invariants;
  std::optional<AssumptionReport> assumptions;
  std::optional<MeshParameters> parameters;
  std::vector<std::string> warnings;
  Json manifest;
};

namespace detail {

using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::string seed_label(const ExperimentConfig& c) {
  return std::to_string(c.seeds.train) + ":" + std::to_string(c.seeds.test);
}

inline Json invariants_json(const MeshInvariantReport& r) {
  return {{"outside_ball_nonzero", r.outside_ball_nonzero}, {"below_reward", r.below_reward},
          {"above_cap", r.above_cap}, {"max_row_sum_error", r.max_row_sum_error}, {"violations", r.violations()}};
}

inline Json assumptions_json(const AssumptionReport& r) {
  return {{"c_z", r.c_z}, {"alpha", r.alpha}, {"kappa", r.kappa}, {"density_samples", r.density_samples},
          {"max_density_ratio", r.max_density_ratio}, {"density_violations", r.density_violations},
          {"violations", r.violations}, {"notes", r.notes}};
}

inline std::size_t method_degree(const std::string& m) { return static_cast<std::size_t>(std::stoul(m.substr(3))); }

inline void require_vanilla(const ExperimentConfig& c, const std::string& method) {
  if (c.model.kind != "gbm" || c.model.dim() != 1 || c.reward.payoff == "custom")
    throw ConfigError(c.source + ": method " + method + " needs a one-dimensional gbm model with a put or call payoff");
}

/// Radius and (for n_train = "auto") mesh size from the theoretical bounds.
template <TransitionModel Model>
std::optional<MeshParameters> resolve_parameters(const ExperimentConfig& c, const Model& model,
                                                 const RewardFunction& reward, ExperimentOutcome& out) {
  const bool need = c.solver.radius == "auto" || c.solver.n_train_auto;
  // diagnostics on a pilot set, independent of the training paths
  const std::size_t pilot = std::min<std::size_t>(2000, c.solver.n_train_auto ? 2000 : c.solver.n_train);
  if (c.model.density != "expansion" || need) {
    const PathSet pilot_paths = simulate_paths(model, c.model.x0, c.solver.steps, pilot, SeedRecord{c.seeds.train, 0x9170u});
    AssumptionCheckOptions opt;
    opt.seed = SeedRecord{c.seeds.train, 0xD1A6u};
    opt.samples = c.model.density == "expansion" ? 50 : 2000;
    out.assumptions = check_assumptions(model, pilot_paths, opt);
    for (const auto& v : out.assumptions->violations) out.warnings.push_back("assumption check: " + v);
  }
  if (!need) return std::nullopt;
  ProblemConstants k;
  double sig2 = 0.0;
  if (c.model.kind == "gbm") {
    for (double s : c.model.sigma) sig2 = std::max(sig2, s * s);
  } else {
    sig2 = c.model.diffusion.value * c.model.diffusion.value;
  }
  k.alpha = c.solver.constants.alpha.value_or(sig2);
  k.kappa = c.solver.constants.kappa.value_or(2.0);
  const double cg = reward.growth_constant();
  k.c_g = c.solver.constants.c_g.value_or(std::isnan(cg) ? 1.0 : cg);
  k.c_z = c.solver.constants.c_z.value_or(out.assumptions ? out.assumptions->c_z : 1.0);
  k.x0_norm = norm(c.model.x0);
  const MeshParameters p = select_parameters(c.solver.epsilon, c.model.dim(), c.solver.steps, k, c.solver.proportionality);
  if (c.solver.n_train_auto && p.paths > 1000000)
    throw ParameterSelectionError(c.source + ": automatic mesh size N = " + std::to_string(p.paths_exact) +
                                  " exceeds the 10^6 path limit; raise epsilon or set n_train");
  return p;
}

}  // namespace detail

/// simulate -> build mesh / fit baselines -> evaluate on fresh paths, one
/// row per requested method. The config is not modified.
inline ExperimentOutcome run_experiment(const ExperimentConfig& c) {
  ExperimentOutcome out;
  const RewardFunction reward = make_reward(c);
  const std::size_t steps = c.solver.steps;
  const double h = c.step_size();
  const SeedRecord train_seed{c.seeds.train, 0}, test_seed{c.seeds.test, 0};

  auto base_row = [&](const std::string& method) {
    ResultRow r;
    r.method = method;
    r.d = c.model.dim();
    r.steps = steps;
    r.n_test = c.solver.n_test;
    r.seed = detail::seed_label(c);
    return r;
  };

  with_model(c, [&](const auto& model) {
    using Model = std::decay_t<decltype(model)>;
    const auto params = detail::resolve_parameters(c, model, reward, out);
    out.parameters = params;
    TruncationConfig trunc;
    if (c.solver.radius == "auto") trunc = TruncationConfig(params->radius);
    else if (c.solver.radius != "inf") trunc = TruncationConfig(std::stod(c.solver.radius));
    const std::size_t n_train = c.solver.n_train_auto ? params->paths : c.solver.n_train;

    std::optional<PathSet> paths;
    double sim_time = 0.0;
    auto training = [&]() -> const PathSet& {
      if (!paths) {
        const auto t0 = detail::Clock::now();
        paths = simulate_paths(model, c.model.x0, steps, n_train, train_seed);
        sim_time = detail::seconds_since(t0);
      }
      return *paths;
    };
    std::optional<MeshValue> mesh;
    double mesh_time = 0.0;
    auto built_mesh = [&]() -> const MeshValue& {
      if (!mesh) {
        const PathSet& ps = training();
        const auto t0 = detail::Clock::now();
        mesh = backward_induction(ps, reward, model, trunc);
        mesh_time = detail::seconds_since(t0) + sim_time;
        out.invariants = check_mesh_invariants(*mesh, ps, reward);
        if (out.invariants->violations() > 0)
          out.warnings.push_back("mesh invariant violations: " + std::to_string(out.invariants->violations()));
      }
      return *mesh;
    };

    for (const std::string& method : c.solver.methods) {
      const auto t0 = detail::Clock::now();
      ResultRow row = base_row(method);
      if (method == "binomial") {
        detail::require_vanilla(c, method);
        if (c.reward.payoff != "put") throw ConfigError(c.source + ": binomial reference is implemented for puts");
        row.mean = binomial_american_put(c.model.x0[0], c.reward.strike, c.model.rate, c.model.sigma[0],
                                         c.model.dividend, c.model.maturity, c.solver.binomial_steps);
        row.n_test = 0;
        row.k_or_degree = c.solver.binomial_steps;
      } else if (method == "bs-european") {
        detail::require_vanilla(c, method);
        const double r = c.discount_rate();
        row.mean = c.reward.payoff == "put"
                       ? black_scholes_put(c.model.x0[0], c.reward.strike, r, c.model.sigma[0], c.model.dividend,
                                           c.model.maturity)
                       : black_scholes_call(c.model.x0[0], c.reward.strike, r, c.model.sigma[0], c.model.dividend,
                                            c.model.maturity);
        row.n_test = 0;
      } else if (method == "european") {
        auto never = [](std::size_t, std::span<const double>) { return kInf; };
        const auto lb = evaluate_policy(never, reward, model, c.model.x0, steps, c.solver.n_test, test_seed);
        row.mean = lb.mean;
        row.std_error = lb.std_error;
      } else if (method == "wsm-direct" || method == "wsm-knn") {
        const PathSet& ps = training();
        const MeshValue& mv = built_mesh();
        const bool knn = method == "wsm-knn";
        const auto est = knn ? ContinuationEstimator<Model>::knn(ps, mv, model, c.solver.neighbours)
                             : ContinuationEstimator<Model>::direct(ps, mv, model);
        const auto te = detail::Clock::now();
        const auto lb = evaluate_lower_bound(est, reward, model, c.solver.n_test, test_seed);
        row.n_train = n_train;
        row.k_or_degree = knn ? c.solver.neighbours : 0;
        row.mean = lb.mean;
        row.std_error = lb.std_error;
        row.mesh_u0 = mv.u0();
        row.wall_time_s = mesh_time + detail::seconds_since(te);
      } else {
        const PathSet& ps = training();
        const std::size_t degree = detail::method_degree(method);
        const PolyBasis basis(c.model.dim(), degree);
        const RegressionPolicy pol = method[0] == 'l' ? fit_ls(ps, reward, basis, {c.solver.itm_only}) : fit_vf(ps, reward, basis);
        for (const auto& w : pol.warnings) out.warnings.push_back(method + ": " + w);
        const auto lb = evaluate_regression_policy(pol, reward, model, c.model.x0, c.solver.n_test, test_seed);
        row.n_train = n_train;
        row.k_or_degree = degree;
        row.mean = lb.mean;
        row.std_error = lb.std_error;
      }
      if (row.wall_time_s == 0.0) row.wall_time_s = detail::seconds_since(t0);
      out.rows.push_back(row);
    }
    (void)h;
  });

  out.manifest = {{"version", kVersion}, {"schema", kResultSchemaVersion}, {"config_source", c.source},
                  {"config", to_json(c)}, {"warnings", out.warnings}};
  Json rows = Json::array();
  for (const auto& r : out.rows) rows.push_back(format_row(r));
  out.manifest["rows"] = rows;
  if (out.invariants) out.manifest["invariants"] = detail::invariants_json(*out.invariants);
  if (out.assumptions) out.manifest["assumptions"] = detail::assumptions_json(*out.assumptions);
  if (out.parameters)
    out.manifest["parameters"] = {{"radius", out.parameters->radius}, {"paths", out.parameters->paths_exact}};
  return out;
}

/// One run per L; rows in the order of `steps_list`.
inline std::vector<ExperimentOutcome> sweep_exercise_dates(const ExperimentConfig& base,
                                                           const std::vector<std::size_t>& steps_list) {
  if (steps_list.empty()) throw ConfigError("sweep_exercise_dates: empty list of L values");
  std::vector<ExperimentOutcome> out;
  for (std::size_t l : steps_list) {
    ExperimentConfig c = base;
    c.solver.steps = l;
    if (l == 0) throw ConfigError("sweep_exercise_dates: L must be positive");
    out.push_back(run_experiment(c));
  }
  return out;
}

struct ConvergencePoint {
  std::size_t n = 0;
  double mean_abs_error = 0.0;
  double mae_std_error = 0.0;
  double mean_error = 0.0;
  std::vector<double> u0;
};

struct ConvergenceReport {
  double oracle = 0.0;
  std::vector<ConvergencePoint> points;
  LineFit fit;  // log MAE on log N
  bool sufficient = false;
  std::string note;
};

/// Requires the Gaussian-walk instance: euler model, zero drift, constant
/// diffusion, d = 1, tent reward. Seed s at size N uses training stream
/// (train + s, N), so different N never share paths.
inline ConvergenceReport sweep_convergence(const ExperimentConfig& base, const std::vector<std::size_t>& sizes,
                                           std::size_t seed_count) {
  if (sizes.empty()) throw ConfigError("sweep_convergence: empty list of N values");
  if (seed_count == 0) throw ConfigError("sweep_convergence: need at least one seed");
  if (base.model.kind != "euler" || base.model.drift.kind != "zero" || base.model.dim() != 1 ||
      base.model.density != "euler" || base.reward.payoff != "custom")
    throw ConfigError(base.source + ": sweep_convergence needs the 1D Gaussian-walk instance "
                      "(euler, zero drift, constant diffusion, euler density, custom tent reward)");
  const double h = base.step_size();
  const double var = base.model.diffusion.value * base.model.diffusion.value * h;
  const RewardFunction reward = make_reward(base);
  ConvergenceReport rep;
  rep.oracle = gaussian_walk_snell([&](std::size_t l, double x) { return reward(l, std::span<const double>(&x, 1)); },
                                   base.model.x0[0], base.solver.steps, var);
  TruncationConfig trunc;
  if (base.solver.radius != "inf" && base.solver.radius != "auto") trunc = TruncationConfig(std::stod(base.solver.radius));
  const EulerChain model(make_sde(base.model), h);
  for (std::size_t n : sizes) {
    ConvergencePoint pt;
    pt.n = n;
    std::vector<double> errs;
    for (std::size_t s = 0; s < seed_count; ++s) {
      const PathSet ps = simulate_paths(model, base.model.x0, base.solver.steps, n, SeedRecord{base.seeds.train + s, n});
      const double u0 = backward_induction(ps, reward, model, trunc).u0();
      pt.u0.push_back(u0);
      errs.push_back(std::abs(u0 - rep.oracle));
      pt.mean_error += (u0 - rep.oracle) / static_cast<double>(seed_count);
    }
    const auto ms = detail::mean_se(errs);
    pt.mean_abs_error = ms.mean;
    pt.mae_std_error = ms.se;
    rep.points.push_back(pt);
  }
  std::vector<double> lx, ly;
  for (const auto& p : rep.points) {
    if (p.mean_abs_error > 0.0) {
      lx.push_back(std::log(static_cast<double>(p.n)));
      ly.push_back(std::log(p.mean_abs_error));
    }
  }
  std::vector<double> distinct = lx;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) {
    rep.note = "insufficient: need at least two distinct N values with nonzero error";
    return rep;
  }
  rep.fit = fit_line(lx, ly);
  rep.sufficient = true;
  if (distinct.size() < 3) rep.note = "slope from two points; no confidence interval";
  return rep;
}

struct TimingEntry {
  std::size_t d = 0, n = 0, steps = 0;
  double seconds = 0.0;
  double evaluations = 0.0;
  double ns_per_evaluation() const { return evaluations > 0.0 ? seconds / evaluations * 1e9 : 0.0; }
};

struct ComplexityReport {
  std::vector<TimingEntry> entries;
  /// slope of log time on log N, one per d (in the order given)
  std::vector<std::pair<std::size_t, LineFit>> n_slopes;
  /// slope of log time on log L at the first d and the middle N
  std::optional<LineFit> l_slope;
};

namespace detail {

inline ExperimentConfig with_dimension(const ExperimentConfig& base, std::size_t d) {
  ExperimentConfig c = base;
  c.model.x0.assign(d, base.model.x0[0]);
  if (c.model.kind == "gbm") {
    c.model.sigma.assign(d, base.model.sigma[0]);
    c.model.correlation.reset();
  }
  if (c.model.density == "expansion" && d != 1) throw ConfigError("complexity sweep: expansion density is 1D only");
  return c;
}

inline TimingEntry time_mesh(const ExperimentConfig& c, std::size_t repeats) {
  TimingEntry e;
  e.d = c.model.dim();
  e.n = c.solver.n_train;
  e.steps = c.solver.steps;
  e.seconds = kInf;
  const RewardFunction reward = make_reward(c);
  with_model(c, [&](const auto& model) {
    for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
      const auto t0 = Clock::now();
      const PathSet ps = simulate_paths(model, c.model.x0, c.solver.steps, c.solver.n_train, SeedRecord{c.seeds.train, 0});
      const MeshValue mv = backward_induction(ps, reward, model);
      e.seconds = std::min(e.seconds, seconds_since(t0));
      e.evaluations = mv.density_evaluations();
    }
  });
  return e;
}

}  // namespace detail

/// Wall time of simulate + backward induction over N (per d) and over L.
/// Each point is the minimum over `repeats` runs.
inline ComplexityReport sweep_complexity(const ExperimentConfig& base, const std::vector<std::size_t>& sizes,
                                         const std::vector<std::size_t>& dims,
                                         const std::vector<std::size_t>& steps_list = {}, std::size_t repeats = 2) {
  if (sizes.empty()) throw ConfigError("sweep_complexity: empty list of N values");
  const std::vector<std::size_t> ds = dims.empty() ? std::vector<std::size_t>{base.model.dim()} : dims;
  ComplexityReport rep;
  for (std::size_t d : ds) {
    std::vector<double> lx, ly;
    for (std::size_t n : sizes) {
      ExperimentConfig c = detail::with_dimension(base, d);
      c.solver.n_train = n;
      const TimingEntry e = detail::time_mesh(c, repeats);
      rep.entries.push_back(e);
      lx.push_back(std::log(static_cast<double>(n)));
      ly.push_back(std::log(e.seconds));
    }
    rep.n_slopes.emplace_back(d, fit_line(lx, ly));
  }
  if (!steps_list.empty()) {
    std::vector<double> lx, ly;
    for (std::size_t l : steps_list) {
      ExperimentConfig c = detail::with_dimension(base, ds.front());
      c.solver.n_train = sizes[sizes.size() / 2];
      c.solver.steps = l;
      const TimingEntry e = detail::time_mesh(c, repeats);
      rep.entries.push_back(e);
      lx.push_back(std::log(static_cast<double>(l)));
      ly.push_back(std::log(e.seconds));
    }
    rep.l_slope = fit_line(lx, ly);
  }
  return rep;
}

}  // namespace wsm
