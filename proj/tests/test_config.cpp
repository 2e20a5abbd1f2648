#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "ccbo/config.hpp"
#include "ccbo/output.hpp"

using namespace ccbo;
using nlohmann::json;

TEST(Config, Defaults) {
  const ExperimentConfig c = config_from_json(json::object());
  EXPECT_EQ(c.objective.name, "rastrigin");
  EXPECT_EQ(c.dim(), 2u);
  EXPECT_EQ(c.basis.family, BasisFamily::Legendre);
  EXPECT_EQ(c.basis.truncation.kind, Truncation::Kind::HyperbolicCross);
  EXPECT_EQ(c.basis.truncation.degree, 2);
  EXPECT_EQ(c.resolved_domain().lower(), (std::vector<double>{-2.0, -2.0}));
  EXPECT_EQ(c.resolved_domain().upper(), (std::vector<double>{2.0, 2.0}));
  EXPECT_EQ(c.hjb.mu, 0.1);
  EXPECT_EQ(c.hjb.epsilon, 0.1);
  EXPECT_EQ(c.hjb.theta, 0.5);
  EXPECT_EQ(c.cbo.N, 50u);
  EXPECT_EQ(c.cbo.alpha, 40.0);
  EXPECT_EQ(c.cbo.sigma, 0.7);
  EXPECT_EQ(c.cbo.dt, 0.1);
  EXPECT_EQ(c.cbo.T, 10.0);
  EXPECT_EQ(c.cbo.lambda, 1.0);
  EXPECT_EQ(c.cbo.beta, 1.0);
  EXPECT_EQ(c.cbo.success_threshold, 0.0625);
  EXPECT_EQ(c.cbo.init.lower, (std::vector<double>{-2.0, -2.0}));
}

TEST(Config, RoundTrip) {
  const json src = json::parse(R"({
    "objective": {"name": "quadratic", "dim": 2, "Q": [[0.5, 0.1], [0.1, 2]]},
    "basis": {"family": "monomial", "truncation": "total_degree", "degree": 4},
    "domain": {"lower": [-3, -1], "upper": [3, 1]},
    "hjb": {"mu": 0.2, "tol_mu": 0.05, "load": {"mode": "monte_carlo", "n_mc": 1000, "seed": 3}},
    "cbo": {"variant": "controlled_ungated", "gate_lambda": true, "N": 17, "seed": 9,
            "init": {"kind": "grid", "lower": [-1, -1], "upper": [0, 0]}},
    "flow": {"x0": [1, -1], "feedback": false},
    "n_runs": 4, "output_dir": "x", "coefficient_file": "v.json"
  })");
  const ExperimentConfig a = config_from_json(src);
  const ExperimentConfig b = config_from_json(to_json(a));
  EXPECT_TRUE(a == b);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(b.cbo.variant, CBOVariant::ControlledUngated);
  EXPECT_EQ(b.cbo.gate_lambda, std::optional<bool>(true));
  EXPECT_EQ(b.hjb.load.kind, LoadMode::Kind::MonteCarlo);
  EXPECT_EQ(b.cbo.init.kind, InitSpec::Kind::EquidistantGrid);
  EXPECT_EQ(*b.coefficient_file, "v.json");
}

TEST(Config, DimensionMismatchesAreConfigErrors) {
  const char* bad[] = {
      R"({"objective": {"dim": 2}, "domain": {"lower": [-1], "upper": [1]}})",
      R"({"objective": {"dim": 3}, "cbo": {"init": {"lower": [0, 0], "upper": [1, 1]}}})",
      R"({"objective": {"dim": 2}, "flow": {"x0": [1]}})",
      R"({"objective": {"name": "quadratic", "dim": 2, "Q": [[1]]}})",
      R"({"objective": {"name": "double_well", "dim": 2}})",
      R"({"objective": {"name": "no_such_function"}})",
      R"({"basis": {"family": "chebyshev"}})",
      R"({"cbo": {"variant": "fancy"}})",
      R"({"hjb": {"theta": 1.5}})",
      R"({"cbo": {"N": 0}})",
      R"({"n_runs": 0})",
      R"([1, 2])",
  };
  for (const char* text : bad) EXPECT_THROW(config_from_json(json::parse(text)), ConfigError) << text;
}

TEST(Config, HashIgnoresOutputLocation) {
  ExperimentConfig a = config_from_json(json::object());
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  b.coefficient_file = "other.json";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(solve_hash(a), solve_hash(b));
  b.cbo.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(solve_hash(a), solve_hash(b));
  b.hjb.mu = 0.2;
  EXPECT_NE(solve_hash(a), solve_hash(b));
}

TEST(Config, QuadraticSolveMatchesRiccatiRoot) {
  const ExperimentConfig c = config_from_json(json::parse(R"({
    "objective": {"name": "quadratic", "dim": 1, "Q": [[1]]},
    "basis": {"family": "monomial", "truncation": "total_degree", "degree": 4},
    "hjb": {"tol_mu": 0.1}
  })"));
  const HJBSolution sol = solve_value_function(c);
  const double s = 0.1 * (-0.1 + std::sqrt(0.01 + 8.0 / 0.1)) / 4.0;
  EXPECT_NEAR(sol.vfa.coeffs[2], s, 1e-4);
  EXPECT_EQ(sol.vfa.config_hash, solve_hash(c));
  EXPECT_EQ(dump_value_function(sol.vfa), dump_value_function(solve_value_function(c).vfa));
}

TEST(Config, MonteCarloRequiresNothingSeparableRequiresForm) {
  ExperimentConfig c = config_from_json(json::parse(R"({"objective": {"name": "ackley", "dim": 2}})"));
  c.hjb.load.kind = LoadMode::Kind::Separable;
  EXPECT_THROW(solve_value_function(c), ConfigError);
}

TEST(Output, RunCsvLayout) {
  EXPECT_EQ(run_csv_header(2), "step,t,v_1,v_2,variance,w2sq,lambda_gate_count,beta_gate_count");
  CBOConfig cfg;
  cfg.init.lower = {-1, -1};
  cfg.init.upper = {1, 1};
  cfg.T = 0.3;
  const RunRecord rec = run(cfg, ackley(2));
  std::ostringstream os;
  write_run_csv(os, rec, 2, "abc");
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 1u + 4u + 1u);
  EXPECT_EQ(lines.front(), run_csv_header(2));
  EXPECT_EQ(lines.back(), "# config_hash=abc");
  EXPECT_EQ(lines[1].substr(0, 4), "0,0,");
  EXPECT_EQ(std::count(lines[2].begin(), lines[2].end(), ','), 7);
}

TEST(Output, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 4.2483542552915890134e-18, -1234.5678e200})
    EXPECT_EQ(std::stod(format_double(x)), x);
}

TEST(Output, SummaryJson) {
  const ExperimentConfig c = config_from_json(json::parse(R"({"cbo": {"init": {"lower": [-1, -1], "upper": [0.5, 0.5]}}})"));
  const BatchSummary s = run_batch(c.cbo, make_objective(c.objective), {}, 3, 7);
  const json j = summary_to_json(s, c, 7);
  EXPECT_EQ(j.at("n_runs"), 3);
  EXPECT_EQ(j.at("base_seed"), 7);
  EXPECT_EQ(j.at("variant"), "standard");
  EXPECT_EQ(j.at("final_w2sq").size(), 3u);
  EXPECT_EQ(j.at("config_hash"), config_hash(c));
  EXPECT_EQ(run_stem(c, 7), "rastrigin_standard_d2_N50_seed7");
}
