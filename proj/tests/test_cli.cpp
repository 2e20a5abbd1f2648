#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccbo/config.hpp"
#include "ccbo/output.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kExperiments = CCBO_EXPERIMENTS_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ccbo_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Runs the CLI with stdout and stderr captured; returns the exit code.
  int ccbo(const std::string& args) {
    const std::string cmd = std::string("\"") + CCBO_CLI_PATH + "\" " + args + " > \"" +
                            (dir_ / "stdout.txt").string() + "\" 2> \"" + (dir_ / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string err() const { return slurp(dir_ / "stderr.txt"); }
  std::string config(const std::string& name) const { return "--config \"" + (kExperiments / name).string() + "\""; }
  std::string out() const { return "--out \"" + dir_.string() + "\""; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SolveIsReproducible) {
  ASSERT_EQ(ccbo("solve-hjb " + config("quadratic_d2.json") + " " + out()), 0) << err();
  const fs::path vf = dir_ / "quadratic_d2_value_function.json";
  ASSERT_TRUE(fs::exists(vf));
  ASSERT_TRUE(fs::exists(dir_ / "quadratic_d2_value_function.report.txt"));
  const std::string first = slurp(vf);
  ASSERT_EQ(ccbo("solve-hjb " + config("quadratic_d2.json") + " " + out()), 0) << err();
  EXPECT_EQ(ccbo::fnv1a_hex(first), ccbo::fnv1a_hex(slurp(vf)));
}

TEST_F(Cli, RunWritesCsv) {
  ASSERT_EQ(ccbo("run " + config("rastrigin_d2_standard.json") + " " + out() + " --seed 3 --particles"), 0) << err();
  const auto lines = lines_of(dir_ / "run_rastrigin_standard_d2_N50_seed3.csv");
  ASSERT_EQ(lines.size(), 1u + 101u + 1u);
  EXPECT_EQ(lines.front(), "step,t,v_1,v_2,variance,w2sq,lambda_gate_count,beta_gate_count");
  const auto c = ccbo::load_config(kExperiments / "rastrigin_d2_standard.json");
  auto seeded = c;
  seeded.cbo.seed = 3;
  EXPECT_EQ(lines.back(), "# config_hash=" + ccbo::config_hash(seeded));
  EXPECT_EQ(lines[101].substr(0, 7), "100,10,");
  const auto particles = lines_of(dir_ / "particles_rastrigin_standard_d2_N50_seed3.csv");
  EXPECT_EQ(particles.front(), "t,particle,x_1,x_2");
  EXPECT_EQ(particles.size(), 1u + 101u * 50u + 1u);
}

TEST_F(Cli, RunIsDeterministic) {
  ASSERT_EQ(ccbo("run " + config("rastrigin_d2_standard.json") + " " + out()), 0) << err();
  const fs::path csv = dir_ / "run_rastrigin_standard_d2_N50_seed0.csv";
  const std::string first = slurp(csv);
  ASSERT_EQ(ccbo("run " + config("rastrigin_d2_standard.json") + " " + out()), 0) << err();
  EXPECT_EQ(first, slurp(csv));
}

TEST_F(Cli, ControlledRunWithoutCoefficientsFails) {
  EXPECT_EQ(ccbo("run " + config("rastrigin_d2_controlled.json") + " " + out()), 1);
  const auto j = nlohmann::json::parse(err());
  EXPECT_EQ(j.at("error"), "missing_coefficients");
}

TEST_F(Cli, InvalidConfigExitsWithTwo) {
  std::ofstream(dir_ / "bad.json") << R"({"objective": {"dim": 2}, "flow": {"x0": [1, 2, 3]}})";
  EXPECT_EQ(ccbo("run --config \"" + (dir_ / "bad.json").string() + "\" " + out()), 2);
  EXPECT_EQ(nlohmann::json::parse(err()).at("error"), "config");
  EXPECT_NE(ccbo("run " + out()), 0);
  EXPECT_NE(ccbo("no-such-command"), 0);
}

TEST_F(Cli, CoefficientFileOfWrongDimensionIsRejected) {
  ASSERT_EQ(ccbo("solve-hjb " + config("quadratic_d2.json") + " " + out()), 0) << err();
  EXPECT_EQ(ccbo("run " + config("rastrigin_d6_controlled.json") + " " + out() + " --coefficients \"" +
                 (dir_ / "quadratic_d2_value_function.json").string() + "\""),
            1);
  EXPECT_EQ(nlohmann::json::parse(err()).at("error"), "coefficient_file");
}

TEST_F(Cli, BatchAndFlow) {
  ASSERT_EQ(ccbo("batch " + config("rastrigin_d2_standard.json") + " " + out() + " --seed 10 --jobs 2"), 0) << err();
  const auto s = nlohmann::json::parse(slurp(dir_ / "summary_rastrigin_standard_d2_N50_seed10.json"));
  EXPECT_EQ(s.at("n_runs"), 100);
  EXPECT_EQ(s.at("base_seed"), 10);
  EXPECT_TRUE(fs::exists(dir_ / "run_rastrigin_standard_d2_N50_seed109.csv"));

  ASSERT_EQ(ccbo("solve-hjb " + config("double_well_M2.json") + " " + out()), 0) << err();
  ASSERT_EQ(ccbo("flow " + config("double_well_M2.json") + " " + out()), 0) << err();
  const auto grad = lines_of(dir_ / "flow_double_well_gradient_d1.csv");
  EXPECT_EQ(grad.front(), "t,x_1,f");
  EXPECT_EQ(grad.size(), 1u + 1001u + 1u);
  EXPECT_TRUE(fs::exists(dir_ / "flow_double_well_feedback_d1.csv"));
}

TEST_F(Cli, EveryCheckedInExperimentRunsWithDefaults) {
  for (const auto& entry : fs::directory_iterator(kExperiments)) {
    if (entry.path().extension() != ".json") continue;
    const auto c = ccbo::load_config(entry.path());
    const std::string args = "--config \"" + entry.path().string() + "\" " + out();
    const bool needs_solve = c.cbo.variant != ccbo::CBOVariant::Standard || (!c.flow.x0.empty() && c.flow.feedback);
    if (needs_solve) {
      ASSERT_EQ(ccbo("solve-hjb " + args), 0) << entry.path() << '\n' << err();
    }
    EXPECT_EQ(ccbo("batch " + args), 0) << entry.path() << '\n' << err();
    if (!c.flow.x0.empty()) {
      EXPECT_EQ(ccbo("flow " + args), 0) << entry.path() << '\n' << err();
    }
  }
}
