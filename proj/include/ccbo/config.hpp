#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccbo/basis.hpp"
#include "ccbo/cbo.hpp"
#include "ccbo/hjb.hpp"
#include "ccbo/io.hpp"
#include "ccbo/objectives.hpp"

namespace ccbo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObjectiveSpec {
  std::string name = "rastrigin";
  std::size_t dim = 2;
  /// quadratic only, row-major d x d
  std::vector<std::vector<double>> q;
};

struct BasisSpec {
  BasisFamily family = BasisFamily::Legendre;
  Truncation truncation = Truncation::hyperbolic_cross(2);
};

struct FlowSpec {
  std::vector<double> x0;
  double dt = 0.01;
  double T = 10.0;
  double fd_step = 1e-6;
  bool gradient = true;
  bool feedback = true;
};

/// Everything one experiment needs. Unspecified fields take the benchmark defaults:
/// domain [-2,2]^d, eps 0.1, mu 0.1, theta 0.5, dt 0.1, alpha 40, sigma 0.7,
/// beta 1, lambda 1, T 10, N 50.
struct ExperimentConfig {
  ObjectiveSpec objective;
  BasisSpec basis;
  std::optional<BoxDomain> domain;
  HJBConfig hjb;
  CBOConfig cbo;
  FlowSpec flow;
  std::size_t n_runs = 100;
  std::string output_dir = "out";
  std::optional<std::string> coefficient_file;

  std::size_t dim() const { return objective.dim; }

  BoxDomain resolved_domain() const {
    return domain ? *domain : BoxDomain::cube(objective.dim, -2.0, 2.0);
  }

  /// Cross-field checks; runs before any assembly or simulation.
  void validate() const {
    const std::size_t d = objective.dim;
    if (d == 0) throw ConfigError("objective.dim must be >= 1");
    if (domain && domain->dim() != d)
      throw ConfigError("domain dimension " + std::to_string(domain->dim()) +
                        " does not match objective.dim " + std::to_string(d));
    if (basis.truncation.degree < 0) throw ConfigError("basis.degree must be >= 0");
    const std::string& name = objective.name;
    if (name != "ackley" && name != "rastrigin" && name != "double_well" && name != "nonsmooth" &&
        name != "quadratic")
      throw ConfigError("unknown objective: " + name);
    if ((name == "double_well" || name == "nonsmooth") && d != 1)
      throw ConfigError(name + " is one-dimensional");
    if (objective.name == "quadratic") {
      if (objective.q.size() != d) throw ConfigError("objective.Q must have objective.dim rows");
      for (const auto& row : objective.q)
        if (row.size() != d) throw ConfigError("objective.Q must be square");
    }
    if (!flow.x0.empty() && flow.x0.size() != d)
      throw ConfigError("flow.x0 dimension does not match objective.dim");
    if (!(flow.dt > 0.0) || !(flow.T > 0.0)) throw ConfigError("flow.dt and flow.T must be > 0");
    if (!(flow.fd_step > 0.0)) throw ConfigError("flow.fd_step must be > 0");
    if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
    try {
      hjb.validate();
      cbo.validate(d);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

inline Objective make_objective(const ObjectiveSpec& spec) {
  if (spec.name == "ackley") return ackley(spec.dim);
  if (spec.name == "rastrigin") return rastrigin(spec.dim);
  if (spec.name == "double_well") {
    if (spec.dim != 1) throw ConfigError("double_well is one-dimensional");
    return double_well_1d();
  }
  if (spec.name == "nonsmooth") {
    if (spec.dim != 1) throw ConfigError("nonsmooth is one-dimensional");
    return nonsmooth_1d();
  }
  if (spec.name == "quadratic") {
    const auto d = static_cast<Eigen::Index>(spec.dim);
    Matrix q(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        q(i, j) = spec.q.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j));
    try {
      return quadratic(q);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("unknown objective: " + spec.name);
}

namespace detail {

inline std::string_view to_string(LoadMode::Kind k) {
  switch (k) {
    case LoadMode::Kind::Auto: return "auto";
    case LoadMode::Kind::Separable: return "separable";
    case LoadMode::Kind::MonteCarlo: return "monte_carlo";
  }
  return "auto";
}

inline LoadMode::Kind load_kind_from_string(const std::string& s) {
  if (s == "auto") return LoadMode::Kind::Auto;
  if (s == "separable") return LoadMode::Kind::Separable;
  if (s == "monte_carlo") return LoadMode::Kind::MonteCarlo;
  throw ConfigError("unknown hjb.load.mode: " + s);
}

inline std::string_view to_string(InitSpec::Kind k) {
  return k == InitSpec::Kind::UniformBox ? "uniform" : "grid";
}

inline InitSpec::Kind init_kind_from_string(const std::string& s) {
  if (s == "uniform") return InitSpec::Kind::UniformBox;
  if (s == "grid") return InitSpec::Kind::EquidistantGrid;
  throw ConfigError("unknown cbo.init.kind: " + s);
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Parses a config document; absent keys keep their defaults. The CBO init box
/// defaults to the domain.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (j.contains("objective")) {
      const auto& o = j.at("objective");
      read(o, "name", c.objective.name);
      read(o, "dim", c.objective.dim);
      read(o, "Q", c.objective.q);
    }
    if (j.contains("basis")) {
      const auto& b = j.at("basis");
      if (b.contains("family"))
        c.basis.family = basis_family_from_string(b.at("family").get<std::string>());
      if (b.contains("truncation"))
        c.basis.truncation.kind = truncation_kind_from_string(b.at("truncation").get<std::string>());
      read(b, "degree", c.basis.truncation.degree);
    }
    if (j.contains("domain") && !j.at("domain").is_null())
      c.domain = BoxDomain(j.at("domain").at("lower").get<std::vector<double>>(),
                           j.at("domain").at("upper").get<std::vector<double>>());
    if (j.contains("hjb")) {
      const auto& h = j.at("hjb");
      read(h, "mu", c.hjb.mu);
      read(h, "epsilon", c.hjb.epsilon);
      read(h, "tol", c.hjb.tol);
      read(h, "max_inner_iters", c.hjb.max_inner_iters);
      read(h, "theta", c.hjb.theta);
      read(h, "tol_mu", c.hjb.tol_mu);
      if (h.contains("load")) {
        const auto& l = h.at("load");
        if (l.contains("mode")) c.hjb.load.kind = detail::load_kind_from_string(l.at("mode").get<std::string>());
        read(l, "n_mc", c.hjb.load.n_mc);
        read(l, "seed", c.hjb.load.seed);
      }
    }
    bool init_box_given = false;
    if (j.contains("cbo")) {
      const auto& b = j.at("cbo");
      read(b, "N", c.cbo.N);
      read(b, "lambda", c.cbo.lambda);
      read(b, "beta", c.cbo.beta);
      read(b, "sigma", c.cbo.sigma);
      read(b, "alpha", c.cbo.alpha);
      read(b, "dt", c.cbo.dt);
      read(b, "T", c.cbo.T);
      if (b.contains("variant")) c.cbo.variant = cbo_variant_from_string(b.at("variant").get<std::string>());
      if (b.contains("gate_lambda") && !b.at("gate_lambda").is_null())
        c.cbo.gate_lambda = b.at("gate_lambda").get<bool>();
      read(b, "seed", c.cbo.seed);
      read(b, "success_threshold", c.cbo.success_threshold);
      if (b.contains("init")) {
        const auto& in = b.at("init");
        if (in.contains("kind")) c.cbo.init.kind = detail::init_kind_from_string(in.at("kind").get<std::string>());
        if (in.contains("lower") || in.contains("upper")) {
          c.cbo.init.lower = in.at("lower").get<std::vector<double>>();
          c.cbo.init.upper = in.at("upper").get<std::vector<double>>();
          init_box_given = true;
        }
      }
    }
    if (j.contains("flow")) {
      const auto& f = j.at("flow");
      read(f, "x0", c.flow.x0);
      read(f, "dt", c.flow.dt);
      read(f, "T", c.flow.T);
      read(f, "fd_step", c.flow.fd_step);
      read(f, "gradient", c.flow.gradient);
      read(f, "feedback", c.flow.feedback);
    }
    read(j, "n_runs", c.n_runs);
    read(j, "output_dir", c.output_dir);
    if (j.contains("coefficient_file") && !j.at("coefficient_file").is_null())
      c.coefficient_file = j.at("coefficient_file").get<std::string>();

    if (!init_box_given && c.objective.dim > 0) {
      const BoxDomain dom = c.domain ? *c.domain : BoxDomain::cube(c.objective.dim, -2.0, 2.0);
      c.cbo.init.lower = dom.lower();
      c.cbo.init.upper = dom.upper();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Fully explicit form; every field is written.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["objective"] = {{"name", c.objective.name}, {"dim", c.objective.dim}};
  if (!c.objective.q.empty()) j["objective"]["Q"] = c.objective.q;
  j["basis"] = {{"family", std::string(to_string(c.basis.family))},
                {"truncation", std::string(to_string(c.basis.truncation.kind))},
                {"degree", c.basis.truncation.degree}};
  const BoxDomain dom = c.resolved_domain();
  j["domain"] = {{"lower", dom.lower()}, {"upper", dom.upper()}};
  j["hjb"] = {{"mu", c.hjb.mu},
              {"epsilon", c.hjb.epsilon},
              {"tol", c.hjb.tol},
              {"max_inner_iters", c.hjb.max_inner_iters},
              {"theta", c.hjb.theta},
              {"tol_mu", c.hjb.tol_mu},
              {"load",
               {{"mode", std::string(detail::to_string(c.hjb.load.kind))},
                {"n_mc", c.hjb.load.n_mc},
                {"seed", c.hjb.load.seed}}}};
  j["cbo"] = {{"N", c.cbo.N},
              {"lambda", c.cbo.lambda},
              {"beta", c.cbo.beta},
              {"sigma", c.cbo.sigma},
              {"alpha", c.cbo.alpha},
              {"dt", c.cbo.dt},
              {"T", c.cbo.T},
              {"variant", std::string(to_string(c.cbo.variant))},
              {"gate_lambda", nullptr},
              {"seed", c.cbo.seed},
              {"success_threshold", c.cbo.success_threshold},
              {"init",
               {{"kind", std::string(detail::to_string(c.cbo.init.kind))},
                {"lower", c.cbo.init.lower},
                {"upper", c.cbo.init.upper}}}};
  if (c.cbo.gate_lambda) j["cbo"]["gate_lambda"] = *c.cbo.gate_lambda;
  j["flow"] = {{"x0", c.flow.x0},   {"dt", c.flow.dt},
               {"T", c.flow.T},     {"fd_step", c.flow.fd_step},
               {"gradient", c.flow.gradient}, {"feedback", c.flow.feedback}};
  j["n_runs"] = c.n_runs;
  j["output_dir"] = c.output_dir;
  j["coefficient_file"] = c.coefficient_file ? nlohmann::json(*c.coefficient_file) : nlohmann::json();
  return j;
}

/// Hash of the explicit form minus the output location, so moving outputs
/// does not change it.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_dir");
  j.erase("coefficient_file");
  return fnv1a_hex(j.dump());
}

/// Hash of the parts that determine the value function.
inline std::string solve_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  return fnv1a_hex(nlohmann::json{{"objective", j["objective"]},
                                  {"basis", j["basis"]},
                                  {"domain", j["domain"]},
                                  {"hjb", j["hjb"]}}
                       .dump());
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return to_json(a) == to_json(b);
}

/// Assembles the load vector the config asks for.
inline Vector assemble_config_load(const MultiIndexBasis& basis, const Objective& f,
                                   const LoadMode& mode) {
  switch (mode.kind) {
    case LoadMode::Kind::Separable:
      if (!f.separable) throw ConfigError(f.name + " has no separable form");
      return assemble_load_separable(basis, *f.separable);
    case LoadMode::Kind::MonteCarlo:
      return assemble_load_montecarlo(basis, f, mode.n_mc, mode.seed);
    case LoadMode::Kind::Auto:
      break;
  }
  return assemble_load(basis, f, mode.n_mc, mode.seed);
}

/// Offline phase: basis, workspace and discount continuation for one config.
inline HJBSolution solve_value_function(const ExperimentConfig& c) {
  c.validate();
  const Objective f = make_objective(c.objective);
  MultiIndexBasis basis(c.basis.family, c.resolved_domain(), c.basis.truncation);
  Vector load = assemble_config_load(basis, f, c.hjb.load);
  GalerkinWorkspace ws(std::move(basis), std::move(load));
  HJBSolution sol = discount_continuation(ws, c.hjb);
  sol.vfa.config_hash = solve_hash(c);
  return sol;
}

}  // namespace ccbo
