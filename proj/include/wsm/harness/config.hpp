#pragma once

// Experiment configuration, read from JSON. Unknown keys are rejected so
// that typos fail loudly instead of silently falling back to defaults.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsm/core.hpp"

namespace wsm {

using Json = nlohmann::json;

struct DriftConfig {
  std::string kind = "zero";  // zero | ou | linear
  double theta = 1.0;         // ou: b(x) = -theta x
  double a = 0.0, b = 0.0;    // linear: b(x) = a + b x
};

struct DiffusionConfig {
  std::string kind = "constant";  // constant
  double value = 1.0;
};

struct ExpansionConfig {
  std::size_t order = 3;
  std::size_t bridges = 2000;
  double rho_bound = 1.0;
  std::uint64_t seed = 1;
};

struct ModelConfig {
  std::string kind = "gbm";  // gbm | euler
  std::vector<double> x0 = {100.0};
  double maturity = 3.0;
  // gbm
  double rate = 0.0;
  double dividend = 0.0;
  std::vector<double> sigma = {0.2};
  std::optional<std::vector<std::vector<double>>> correlation;
  // euler
  DriftConfig drift;
  DiffusionConfig diffusion;
  std::string density = "euler";  // euler | expansion
  ExpansionConfig expansion;

  std::size_t dim() const { return x0.size(); }
};

struct RewardConfig {
  std::string payoff = "put";  // put | call | custom
  std::string custom = "tent";  // custom payoffs: tent
  double strike = 100.0;
  double height = 3.0;
  /// discount rate folded into g_l; defaults to the model rate
  std::optional<double> rate;
};

struct ConstantsConfig {
  std::optional<double> alpha, kappa, c_g, c_z;
};

struct SolverConfig {
  std::vector<std::string> methods = {"wsm-direct"};
  std::size_t steps = 50;
  std::size_t n_train = 2000;
  bool n_train_auto = false;
  std::size_t n_test = 20000;
  /// "inf", "auto" or a positive number
  std::string radius = "inf";
  std::size_t neighbours = 500;
  std::size_t binomial_steps = 20000;
  bool itm_only = false;
  double epsilon = 0.1;
  double proportionality = 1.0;
  ConstantsConfig constants;
};

struct SeedConfig {
  std::uint64_t train = 1;
  std::uint64_t test = 2;
};

struct ExperimentConfig {
  ModelConfig model;
  RewardConfig reward;
  SolverConfig solver;
  SeedConfig seeds;
  std::string output = "results.csv";
  /// where the config came from, for error messages
  std::string source = "<memory>";

  double step_size() const { return model.maturity / static_cast<double>(solver.steps); }
  double discount_rate() const { return reward.rate.value_or(model.kind == "gbm" ? model.rate : 0.0); }
};

namespace detail {

inline void reject_unknown(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
void read_opt(const Json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key)) return;
  T v{};
  read(obj, key, v, where);
  out = v;
}

inline void check_choice(const std::string& value, const std::string& where, std::initializer_list<const char*> choices) {
  for (const char* c : choices)
    if (value == c) return;
  std::string list;
  for (const char* c : choices) list += std::string(list.empty() ? "" : ", ") + c;
  throw ConfigError(where + ": '" + value + "' is not one of {" + list + "}");
}

}  // namespace detail

inline bool is_known_method(const std::string& m) {
  if (m == "wsm-direct" || m == "wsm-knn" || m == "binomial" || m == "bs-european" || m == "european") return true;
  if ((m.rfind("ls-", 0) == 0 || m.rfind("vf-", 0) == 0) && m.size() > 3)
    return m.find_first_not_of("0123456789", 3) == std::string::npos;
  return false;
}

inline ExperimentConfig parse_config(const Json& j, const std::string& source = "<memory>") {
  using detail::read;
  ExperimentConfig c;
  c.source = source;
  const std::string top = source;
  detail::reject_unknown(j, top, {"model", "reward", "solver", "seeds", "output"});

  if (j.contains("model")) {
    const Json& m = j["model"];
    const std::string w = top + ": model";
    detail::reject_unknown(m, w, {"kind", "x0", "maturity", "rate", "dividend", "sigma", "correlation", "drift",
                                  "diffusion", "density", "expansion"});
    read(m, "kind", c.model.kind, w);
    detail::check_choice(c.model.kind, w + ".kind", {"gbm", "euler"});
    read(m, "x0", c.model.x0, w);
    read(m, "maturity", c.model.maturity, w);
    read(m, "rate", c.model.rate, w);
    read(m, "dividend", c.model.dividend, w);
    read(m, "sigma", c.model.sigma, w);
    detail::read_opt(m, "correlation", c.model.correlation, w);
    read(m, "density", c.model.density, w);
    detail::check_choice(c.model.density, w + ".density", {"euler", "expansion"});
    if (m.contains("drift")) {
      const Json& d = m["drift"];
      detail::reject_unknown(d, w + ".drift", {"kind", "theta", "a", "b"});
      read(d, "kind", c.model.drift.kind, w + ".drift");
      detail::check_choice(c.model.drift.kind, w + ".drift.kind", {"zero", "ou", "linear"});
      read(d, "theta", c.model.drift.theta, w + ".drift");
      read(d, "a", c.model.drift.a, w + ".drift");
      read(d, "b", c.model.drift.b, w + ".drift");
    }
    if (m.contains("diffusion")) {
      const Json& d = m["diffusion"];
      detail::reject_unknown(d, w + ".diffusion", {"kind", "value"});
      read(d, "kind", c.model.diffusion.kind, w + ".diffusion");
      detail::check_choice(c.model.diffusion.kind, w + ".diffusion.kind", {"constant"});
      read(d, "value", c.model.diffusion.value, w + ".diffusion");
    }
    if (m.contains("expansion")) {
      const Json& e = m["expansion"];
      detail::reject_unknown(e, w + ".expansion", {"order", "bridges", "rho_bound", "seed"});
      read(e, "order", c.model.expansion.order, w + ".expansion");
      read(e, "bridges", c.model.expansion.bridges, w + ".expansion");
      read(e, "rho_bound", c.model.expansion.rho_bound, w + ".expansion");
      read(e, "seed", c.model.expansion.seed, w + ".expansion");
    }
  }
  if (j.contains("reward")) {
    const Json& r = j["reward"];
    const std::string w = top + ": reward";
    detail::reject_unknown(r, w, {"payoff", "custom", "strike", "height", "rate"});
    read(r, "payoff", c.reward.payoff, w);
    detail::check_choice(c.reward.payoff, w + ".payoff", {"put", "call", "custom"});
    read(r, "custom", c.reward.custom, w);
    detail::check_choice(c.reward.custom, w + ".custom", {"tent"});
    read(r, "strike", c.reward.strike, w);
    read(r, "height", c.reward.height, w);
    detail::read_opt(r, "rate", c.reward.rate, w);
  }
  if (j.contains("solver")) {
    const Json& s = j["solver"];
    const std::string w = top + ": solver";
    detail::reject_unknown(s, w, {"methods", "steps", "n_train", "n_test", "radius", "neighbours", "binomial_steps",
                                  "itm_only", "epsilon", "proportionality", "constants"});
    read(s, "methods", c.solver.methods, w);
    read(s, "steps", c.solver.steps, w);
    if (s.contains("n_train") && s["n_train"].is_string()) {
      if (s["n_train"].get<std::string>() != "auto") throw ConfigError(w + ".n_train: expected a count or \"auto\"");
      c.solver.n_train_auto = true;
    } else {
      read(s, "n_train", c.solver.n_train, w);
    }
    read(s, "n_test", c.solver.n_test, w);
    if (s.contains("radius")) {
      const Json& r = s["radius"];
      if (r.is_number()) {
        std::ostringstream os;
        os.precision(17);
        os << r.get<double>();
        c.solver.radius = os.str();
      } else {
        read(s, "radius", c.solver.radius, w);
      }
    }
    read(s, "neighbours", c.solver.neighbours, w);
    read(s, "binomial_steps", c.solver.binomial_steps, w);
    read(s, "itm_only", c.solver.itm_only, w);
    read(s, "epsilon", c.solver.epsilon, w);
    read(s, "proportionality", c.solver.proportionality, w);
    if (s.contains("constants")) {
      const Json& k = s["constants"];
      detail::reject_unknown(k, w + ".constants", {"alpha", "kappa", "c_g", "c_z"});
      detail::read_opt(k, "alpha", c.solver.constants.alpha, w + ".constants");
      detail::read_opt(k, "kappa", c.solver.constants.kappa, w + ".constants");
      detail::read_opt(k, "c_g", c.solver.constants.c_g, w + ".constants");
      detail::read_opt(k, "c_z", c.solver.constants.c_z, w + ".constants");
    }
  }
  if (j.contains("seeds")) {
    const Json& s = j["seeds"];
    detail::reject_unknown(s, top + ": seeds", {"train", "test"});
    read(s, "train", c.seeds.train, top + ": seeds");
    read(s, "test", c.seeds.test, top + ": seeds");
  }
  read(j, "output", c.output, top);

  // semantic checks
  const std::string w = top;
  if (c.model.x0.empty()) throw ConfigError(w + ": model.x0 must not be empty");
  if (!(c.model.maturity > 0.0)) throw ConfigError(w + ": model.maturity must be positive");
  if (c.model.kind == "gbm") {
    if (c.model.sigma.size() == 1 && c.model.dim() > 1) c.model.sigma.assign(c.model.dim(), c.model.sigma[0]);
    if (c.model.sigma.size() != c.model.dim()) throw ConfigError(w + ": model.sigma must have one entry per dimension");
  }
  if (c.model.kind == "euler" && c.model.density == "expansion" && c.model.dim() != 1)
    throw ConfigError(w + ": the expansion density is one-dimensional");
  if (c.solver.steps == 0) throw ConfigError(w + ": solver.steps must be positive");
  if (c.solver.n_test == 0) throw ConfigError(w + ": solver.n_test must be positive");
  if (!c.solver.n_train_auto && c.solver.n_train == 0) throw ConfigError(w + ": solver.n_train must be positive");
  for (const auto& m : c.solver.methods)
    if (!is_known_method(m)) throw ConfigError(w + ": solver.methods: unknown method '" + m + "'");
  if (c.solver.radius != "inf" && c.solver.radius != "auto") {
    double r = 0.0;
    try {
      std::size_t pos = 0;
      r = std::stod(c.solver.radius, &pos);
      if (pos != c.solver.radius.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(w + ": solver.radius must be \"inf\", \"auto\" or a number");
    }
    if (!(r > 0.0)) throw ConfigError(w + ": solver.radius must be positive");
  }
  if (c.seeds.train == c.seeds.test) throw ConfigError(w + ": seeds.train and seeds.test must differ");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j, path);
}

inline Json to_json(const ExperimentConfig& c) {
  Json m = {{"kind", c.model.kind}, {"x0", c.model.x0}, {"maturity", c.model.maturity}};
  if (c.model.kind == "gbm") {
    m["rate"] = c.model.rate;
    m["dividend"] = c.model.dividend;
    m["sigma"] = c.model.sigma;
    if (c.model.correlation) m["correlation"] = *c.model.correlation;
  } else {
    m["drift"] = {{"kind", c.model.drift.kind}, {"theta", c.model.drift.theta}, {"a", c.model.drift.a}, {"b", c.model.drift.b}};
    m["diffusion"] = {{"kind", c.model.diffusion.kind}, {"value", c.model.diffusion.value}};
    m["density"] = c.model.density;
    if (c.model.density == "expansion")
      m["expansion"] = {{"order", c.model.expansion.order}, {"bridges", c.model.expansion.bridges},
                        {"rho_bound", c.model.expansion.rho_bound}, {"seed", c.model.expansion.seed}};
  }
  Json r = {{"payoff", c.reward.payoff}, {"strike", c.reward.strike}};
  if (c.reward.payoff == "custom") r = {{"payoff", "custom"}, {"custom", c.reward.custom}, {"height", c.reward.height}};
  if (c.reward.rate) r["rate"] = *c.reward.rate;
  Json s = {{"methods", c.solver.methods}, {"steps", c.solver.steps}, {"n_test", c.solver.n_test},
            {"radius", c.solver.radius}, {"neighbours", c.solver.neighbours},
            {"binomial_steps", c.solver.binomial_steps}, {"itm_only", c.solver.itm_only},
            {"epsilon", c.solver.epsilon}, {"proportionality", c.solver.proportionality}};
  if (c.solver.n_train_auto) s["n_train"] = "auto";
  else s["n_train"] = c.solver.n_train;
  Json k = Json::object();
  if (c.solver.constants.alpha) k["alpha"] = *c.solver.constants.alpha;
  if (c.solver.constants.kappa) k["kappa"] = *c.solver.constants.kappa;
  if (c.solver.constants.c_g) k["c_g"] = *c.solver.constants.c_g;
  if (c.solver.constants.c_z) k["c_z"] = *c.solver.constants.c_z;
  if (!k.empty()) s["constants"] = k;
  return {{"model", m}, {"reward", r}, {"solver", s}, {"seeds", {{"train", c.seeds.train}, {"test", c.seeds.test}}},
          {"output", c.output}};
}

}  // namespace wsm
