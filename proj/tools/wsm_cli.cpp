// wsm: command-line front end for the weighted stochastic mesh solver.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "wsm/wsm.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kCheck = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> test_seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "override the training seed");
  app->add_option("--test-seed", c.test_seed, "override the test seed");
  app->add_option("--out", c.out, "override the output CSV path");
}

wsm::ExperimentConfig load(const Common& c) {
  wsm::ExperimentConfig cfg = wsm::load_config(c.config);
  if (c.seed) cfg.seeds.train = *c.seed;
  if (c.test_seed) cfg.seeds.test = *c.test_seed;
  if (!c.out.empty()) cfg.output = c.out;
  if (cfg.seeds.train == cfg.seeds.test) throw wsm::ConfigError("training and test seeds must differ");
  return cfg;
}

std::string manifest_path(const std::string& csv) { return csv + ".manifest.jsonl"; }

void print_rows(const std::vector<wsm::ResultRow>& rows) {
  std::cout << wsm::kResultColumns << '\n';
  for (const auto& r : rows) std::cout << wsm::format_row(r) << '\n';
}

bool is_lower_bound(const std::string& m) {
  return m == "wsm-direct" || m == "wsm-knn" || m == "european" || m.rfind("ls-", 0) == 0 || m.rfind("vf-", 0) == 0;
}

// Acceptance checks on one experiment; returns the list of failures.
std::vector<std::string> check_outcome(const wsm::ExperimentConfig& cfg, const wsm::ExperimentOutcome& out) {
  std::vector<std::string> fails;
  if (out.invariants && out.invariants->violations() > 0)
    fails.push_back("mesh invariants: " + std::to_string(out.invariants->violations()) + " violations");
  const bool vanilla_put = cfg.model.kind == "gbm" && cfg.model.dim() == 1 && cfg.reward.payoff == "put";
  if (!vanilla_put) return fails;
  const double ref = wsm::binomial_american_put(cfg.model.x0[0], cfg.reward.strike, cfg.model.rate, cfg.model.sigma[0],
                                                cfg.model.dividend, cfg.model.maturity, cfg.solver.binomial_steps);
  const double bs = wsm::black_scholes_put(cfg.model.x0[0], cfg.reward.strike, cfg.discount_rate(), cfg.model.sigma[0],
                                           cfg.model.dividend, cfg.model.maturity);
  for (const auto& r : out.rows) {
    if (r.method == "european") {
      if (std::abs(r.mean - bs) > 3.0 * r.std_error)
        fails.push_back("european: " + std::to_string(r.mean) + " not within 3 SE of Black-Scholes " + std::to_string(bs));
    } else if (is_lower_bound(r.method) && r.mean > ref + 3.0 * r.std_error) {
      fails.push_back(r.method + ": lower bound " + std::to_string(r.mean) + " exceeds reference " + std::to_string(ref) +
                      " + 3 SE");
    }
  }
  return fails;
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
      x = std::stoull(item, &pos);
    } catch (const std::exception&) {
      throw wsm::ConfigError("not a list of positive integers: '" + s + "'");
    }
    if (pos != item.size() || x == 0) throw wsm::ConfigError("not a list of positive integers: '" + s + "'");
    v.push_back(static_cast<std::size_t>(x));
  }
  return v;
}

wsm::Json fit_json(const wsm::LineFit& f) {
  auto num = [](double v) { return std::isnan(v) ? wsm::Json(nullptr) : wsm::Json(v); };
  return {{"slope", num(f.slope)}, {"intercept", num(f.intercept)}, {"slope_se", num(f.slope_se)},
          {"ci95", {num(f.ci_low), num(f.ci_high)}}};
}

void write_json(const std::string& path, const wsm::Json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw wsm::ConfigError("cannot write " + path);
  f << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted stochastic mesh solver for optimal stopping"};
  app.require_subcommand(1);
  bool check = false;

  Common sim_opts;
  auto* sim = app.add_subcommand("simulate", "simulate training paths and write them as CSV");
  add_common(sim, sim_opts);

  Common price_opts;
  std::vector<std::string> methods;
  std::string save_mesh;
  auto* price = app.add_subcommand("price", "run one experiment and append rows to the results CSV");
  add_common(price, price_opts);
  price->add_option("-m,--method", methods, "methods to run (overrides solver.methods)");
  price->add_option("--save-mesh", save_mesh, "write the WSM mesh to this binary file");
  price->add_flag("--check", check, "exit 4 when a result violates its reference checks");

  Common sl_opts;
  std::string sl_list = "10,25,50,100";
  auto* sweep_l = app.add_subcommand("sweep-l", "lower bounds as a function of the number of exercise dates");
  add_common(sweep_l, sl_opts);
  sweep_l->add_option("--steps", sl_list, "comma-separated L values");
  sweep_l->add_flag("--check", check, "exit 4 when a result violates its reference checks");

  Common sn_opts;
  std::string sn_list = "500,1000,2000,4000,8000,16000,32000";
  std::size_t sn_seeds = 20;
  std::string sn_report;
  auto* sweep_n = app.add_subcommand("sweep-n", "mesh error against the quadrature oracle as N grows");
  add_common(sweep_n, sn_opts);
  sweep_n->add_option("--sizes", sn_list, "comma-separated N values");
  sweep_n->add_option("--seeds", sn_seeds, "independent seeds per N");
  sweep_n->add_option("--report", sn_report, "JSON slope report path (stdout if omitted)");

  Common sc_opts;
  std::string sc_n, sc_d = "", sc_l = "";
  std::size_t sc_repeats = 2;
  std::string sc_report;
  auto* sweep_c = app.add_subcommand("sweep-complexity", "wall time of the mesh as a function of N, d and L");
  add_common(sweep_c, sc_opts);
  sweep_c->add_option("--sizes", sc_n, "comma-separated N values")->required();
  sweep_c->add_option("--dims", sc_d, "comma-separated dimensions");
  sweep_c->add_option("--steps", sc_l, "comma-separated L values for the L slope");
  sweep_c->add_option("--repeats", sc_repeats, "timing repeats per point (minimum is kept)");
  sweep_c->add_option("--report", sc_report, "JSON report path (stdout if omitted)");

  Common dc_opts;
  double dc_x = 0.0;
  std::size_t dc_probes = 41;
  std::string dc_report;
  auto* density = app.add_subcommand("density-check", "evaluate the small-time density expansion on a probe grid");
  add_common(density, dc_opts);
  density->add_option("--x", dc_x, "conditioning state x");
  density->add_option("--probes", dc_probes, "number of probe points");
  density->add_option("--report", dc_report, "JSON report path (stdout if omitted)");

  double s0 = 100, strike = 100, rate = 0.08, sigma = 0.2, dividend = 0.0, maturity = 3.0;
  std::size_t tree_steps = 20000;
  auto* reference = app.add_subcommand("reference", "binomial American put and Black-Scholes European put");
  reference->add_option("--s0", s0);
  reference->add_option("--strike", strike);
  reference->add_option("--rate", rate);
  reference->add_option("--sigma", sigma);
  reference->add_option("--dividend", dividend);
  reference->add_option("--maturity", maturity);
  reference->add_option("--tree-steps", tree_steps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) {
      const auto cfg = load(sim_opts);
      const std::string out = sim_opts.out.empty() ? "paths.csv" : sim_opts.out;
      wsm::with_model(cfg, [&](const auto& model) {
        const auto ps = wsm::simulate_paths(model, cfg.model.x0, cfg.solver.steps, cfg.solver.n_train,
                                            wsm::SeedRecord{cfg.seeds.train, 0});
        std::ofstream f(out);
        if (!f) throw wsm::ConfigError("cannot write " + out);
        f << std::setprecision(17) << "path,step";
        for (std::size_t i = 0; i < ps.dim(); ++i) f << ",x" << i;
        f << '\n';
        for (std::size_t n = 0; n < ps.paths(); ++n)
          for (std::size_t l = 0; l <= ps.steps(); ++l) {
            f << n << ',' << l;
            for (double v : ps.at(n, l)) f << ',' << v;
            f << '\n';
          }
      });
      std::cerr << "wrote " << out << '\n';
      return kOk;
    }

    if (*price) {
      auto cfg = load(price_opts);
      if (!methods.empty()) {
        for (const auto& m : methods)
          if (!wsm::is_known_method(m)) throw wsm::ConfigError("unknown method '" + m + "'");
        cfg.solver.methods = methods;
      }
      const auto out = wsm::run_experiment(cfg);
      for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
      wsm::append_rows(cfg.output, out.rows);
      wsm::append_line(manifest_path(cfg.output), out.manifest.dump());
      print_rows(out.rows);
      if (!save_mesh.empty()) {
        wsm::with_model(cfg, [&](const auto& model) {
          const auto ps = wsm::simulate_paths(model, cfg.model.x0, cfg.solver.steps, cfg.solver.n_train,
                                              wsm::SeedRecord{cfg.seeds.train, 0});
          wsm::TruncationConfig trunc;
          if (cfg.solver.radius == "auto") trunc = wsm::TruncationConfig(out.parameters->radius);
          else if (cfg.solver.radius != "inf") trunc = wsm::TruncationConfig(std::stod(cfg.solver.radius));
          wsm::save_mesh(save_mesh, wsm::backward_induction(ps, wsm::make_reward(cfg), model, trunc));
        });
      }
      if (check) {
        const auto fails = check_outcome(cfg, out);
        for (const auto& f : fails) std::cerr << "check failed: " << f << '\n';
        if (!fails.empty()) return kCheck;
      }
      return kOk;
    }

    if (*sweep_l) {
      const auto cfg = load(sl_opts);
      const auto ls = parse_list(sl_list);
      if (ls.empty()) throw wsm::ConfigError("--steps: empty list");
      std::vector<wsm::ResultRow> rows;
      std::vector<std::string> fails;
      for (std::size_t l : ls) {
        auto c = cfg;
        c.solver.steps = l;
        const auto out = wsm::run_experiment(c);
        for (const auto& w : out.warnings) std::cerr << "warning (L=" << l << "): " << w << '\n';
        wsm::append_rows(c.output, out.rows);
        wsm::append_line(manifest_path(c.output), out.manifest.dump());
        rows.insert(rows.end(), out.rows.begin(), out.rows.end());
        if (check)
          for (const auto& f : check_outcome(c, out)) fails.push_back("L=" + std::to_string(l) + ": " + f);
      }
      print_rows(rows);
      for (const auto& f : fails) std::cerr << "check failed: " << f << '\n';
      return fails.empty() ? kOk : kCheck;
    }

    if (*sweep_n) {
      const auto cfg = load(sn_opts);
      const auto sizes = parse_list(sn_list);
      const auto rep = wsm::sweep_convergence(cfg, sizes, sn_seeds);
      std::vector<wsm::ResultRow> rows;
      wsm::Json pts = wsm::Json::array();
      for (const auto& p : rep.points) {
        pts.push_back({{"n", p.n}, {"mean_abs_error", p.mean_abs_error}, {"mae_std_error", p.mae_std_error},
                       {"mean_error", p.mean_error}});
        for (std::size_t s = 0; s < p.u0.size(); ++s) {
          wsm::ResultRow r;
          r.method = "wsm-mesh";
          r.d = 1;
          r.steps = cfg.solver.steps;
          r.n_train = p.n;
          r.n_test = 0;
          r.mean = p.u0[s];
          r.std_error = std::nan("");
          r.mesh_u0 = p.u0[s];
          r.seed = std::to_string(cfg.seeds.train + s) + ":" + std::to_string(p.n);
          rows.push_back(r);
        }
      }
      wsm::append_rows(cfg.output, rows);
      wsm::Json j = {{"oracle", rep.oracle}, {"points", pts}, {"sufficient", rep.sufficient}, {"note", rep.note},
                     {"fit", fit_json(rep.fit)}, {"seeds", sn_seeds}};
      write_json(sn_report, j);
      return kOk;
    }

    if (*sweep_c) {
      const auto cfg = load(sc_opts);
      const auto rep = wsm::sweep_complexity(cfg, parse_list(sc_n), parse_list(sc_d), parse_list(sc_l), sc_repeats);
      wsm::Json entries = wsm::Json::array();
      for (const auto& e : rep.entries)
        entries.push_back({{"d", e.d}, {"n", e.n}, {"L", e.steps}, {"seconds", e.seconds},
                           {"density_evaluations", e.evaluations}, {"ns_per_evaluation", e.ns_per_evaluation()}});
      wsm::Json slopes = wsm::Json::array();
      for (const auto& [d, f] : rep.n_slopes) slopes.push_back({{"d", d}, {"time_vs_n", fit_json(f)}});
      wsm::Json j = {{"entries", entries}, {"n_slopes", slopes}};
      if (rep.l_slope) j["time_vs_l"] = fit_json(*rep.l_slope);
      write_json(sc_report, j);
      return kOk;
    }

    if (*density) {
      const auto cfg = load(dc_opts);
      if (cfg.model.kind != "euler" || cfg.model.dim() != 1)
        throw wsm::ConfigError("density-check needs a one-dimensional euler model block");
      const auto diff = wsm::make_diffusion1d(cfg.model);
      wsm::ExpansionOptions opt;
      opt.order = cfg.model.expansion.order;
      opt.step = cfg.step_size();
      opt.bridges = cfg.model.expansion.bridges;
      opt.seed = cfg.model.expansion.seed;
      const wsm::ExpansionDensity exp(diff, opt);
      const double sd = std::sqrt(opt.step) * diff.sigma_upper();
      const double lo = dc_x - 10.0 * sd, hi = dc_x + 10.0 * sd;
      const std::size_t np = std::max<std::size_t>(dc_probes, 3);
      wsm::Json probes = wsm::Json::array();
      std::vector<std::pair<double, double>> pairs;
      std::vector<double> ys, ps;
      for (std::size_t i = 0; i < np; ++i) {
        const double y = dc_x - 3.0 * sd + 6.0 * sd * static_cast<double>(i) / static_cast<double>(np - 1);
        const auto v = exp.evaluate(y, dc_x);
        probes.push_back({{"y", y}, {"pn", v.density}, {"std_error", v.std_error}});
        pairs.emplace_back(dc_x, y);
      }
      // normalisation on a 401-point trapezoid grid over x +- 10 sqrt(step) sigma_upper
      double mass = 0.0;
      const std::size_t nq = 401;
      for (std::size_t i = 0; i < nq; ++i) {
        const double y = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nq - 1);
        const double w = (i == 0 || i + 1 == nq) ? 0.5 : 1.0;
        mass += w * exp.density(y, dc_x);
      }
      mass *= (hi - lo) / static_cast<double>(nq - 1);
      const std::size_t nmax = std::max<std::size_t>(opt.order, 1);
      const auto decay = wsm::ratio_decay_check(exp, nmax, pairs);
      wsm::Json j = {{"x", dc_x}, {"step", opt.step}, {"order", opt.order}, {"bridges", opt.bridges},
                     {"step_limit", exp.step_limit()}, {"probes", probes}, {"normalization", mass},
                     {"decay", {{"delta", decay.delta}, {"ratio", decay.ratio}, {"bound", decay.bound},
                                {"allowed", decay.allowed}, {"violations", decay.violations}}}};
      write_json(dc_report, j);
      return decay.passed() ? kOk : kCheck;
    }

    if (*reference) {
      const double am = wsm::binomial_american_put(s0, strike, rate, sigma, dividend, maturity, tree_steps);
      const double eu = wsm::black_scholes_put(s0, strike, rate, sigma, dividend, maturity);
      std::cout << std::setprecision(10) << "binomial_american_put " << am << "\nblack_scholes_put " << eu << '\n';
      return kOk;
    }
  } catch (const wsm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const wsm::CapabilityError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const wsm::Error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kOk;
}
