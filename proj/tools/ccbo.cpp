// Command-line driver: offline HJB solve, CBO runs and batches, deterministic flows.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccbo/cbo.hpp"
#include "ccbo/config.hpp"
#include "ccbo/hjb.hpp"
#include "ccbo/io.hpp"
#include "ccbo/output.hpp"

namespace fs = std::filesystem;
using namespace ccbo;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::string> out;
  std::optional<std::string> coefficients;
  bool particles = false;
};

struct CliError : std::runtime_error {
  CliError(std::string kind, const std::string& what) : std::runtime_error(what), kind(std::move(kind)) {}
  std::string kind;
};

void report_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

fs::path output_dir(const ExperimentConfig& c, const Options& opt) {
  if (opt.out) return *opt.out;
  fs::path dir = c.output_dir;
  if (dir.is_relative())
    if (const char* root = std::getenv("CCBO_OUTPUT_ROOT"); root && *root) return fs::path(root) / dir;
  return dir;
}

fs::path coefficient_path(const ExperimentConfig& c, const Options& opt) {
  if (opt.coefficients) return *opt.coefficients;
  if (c.coefficient_file) return *c.coefficient_file;
  std::ostringstream name;
  name << c.objective.name << "_d" << c.dim() << "_value_function.json";
  return output_dir(c, opt) / name.str();
}

ExperimentConfig load(const Options& opt) {
  ExperimentConfig c = load_config(opt.config_path);
  if (opt.seed) c.cbo.seed = *opt.seed;
  return c;
}

std::optional<ValueFunctionApprox> controller_for(const ExperimentConfig& c, const Options& opt) {
  if (c.cbo.variant == CBOVariant::Standard) return std::nullopt;
  const fs::path path = coefficient_path(c, opt);
  if (!fs::exists(path))
    throw CliError("missing_coefficients", "controlled variant needs a value-function file; " +
                                               path.string() + " does not exist (run solve-hjb first)");
  ValueFunctionApprox vfa = load_value_function(path);
  require_dimension(vfa, c.dim());
  return vfa;
}

int cmd_solve_hjb(const Options& opt) {
  const ExperimentConfig c = load(opt);
  const HJBSolution sol = solve_value_function(c);
  const fs::path path = coefficient_path(c, opt);
  write_file(path, dump_value_function(sol.vfa));
  fs::path report = path;
  report.replace_extension(".report.txt");
  write_file(report, solve_report_text(sol.report, sol.vfa));
  std::cout << "value function: " << path.string() << '\n'
            << "report: " << report.string() << '\n'
            << "stages: " << sol.report.stages.size()
            << ", iterations: " << sol.report.total_iterations() << '\n';
  if (!sol.report.warning.empty()) std::cout << "warning: " << sol.report.warning << '\n';
  return 0;
}

int cmd_run(const Options& opt) {
  const ExperimentConfig c = load(opt);
  const Objective f = make_objective(c.objective);
  const auto vfa = controller_for(c, opt);
  const RunRecord rec = run(c.cbo, f, Controller{vfa ? &*vfa : nullptr}, opt.particles);
  const fs::path dir = output_dir(c, opt);
  const std::string stem = run_stem(c, c.cbo.seed);
  const std::string hash = config_hash(c);
  std::ostringstream csv;
  write_run_csv(csv, rec, c.dim(), hash);
  write_file(dir / ("run_" + stem + ".csv"), csv.str());
  if (opt.particles) {
    std::ostringstream pcsv;
    write_particles_csv(pcsv, rec, hash);
    write_file(dir / ("particles_" + stem + ".csv"), pcsv.str());
  }
  const StepRecord& last = rec.steps.back();
  std::cout << "run: " << (dir / ("run_" + stem + ".csv")).string() << '\n'
            << "final t=" << last.t << " variance=" << last.variance;
  if (last.w2sq) std::cout << " w2sq=" << *last.w2sq;
  std::cout << '\n';
  if (rec.error) {
    report_error("step_failed", *rec.error);
    return kExitRuntime;
  }
  return 0;
}

int cmd_batch(const Options& opt) {
  const ExperimentConfig c = load(opt);
  const Objective f = make_objective(c.objective);
  const auto vfa = controller_for(c, opt);
  const std::uint64_t base = c.cbo.seed;
  const BatchSummary s = run_batch(c.cbo, f, Controller{vfa ? &*vfa : nullptr}, c.n_runs, base, opt.jobs);
  const fs::path dir = output_dir(c, opt);
  const std::string hash = config_hash(c);
  for (std::size_t k = 0; k < s.runs.size(); ++k) {
    std::ostringstream csv;
    write_run_csv(csv, s.runs[k], c.dim(), hash);
    write_file(dir / ("run_" + run_stem(c, base + k) + ".csv"), csv.str());
  }
  const fs::path summary = dir / ("summary_" + run_stem(c, base) + ".json");
  write_file(summary, summary_to_json(s, c, base).dump(2) + "\n");
  std::cout << "summary: " << summary.string() << '\n'
            << "runs=" << s.n_runs << " failed=" << s.failed_runs << " mean_w2sq=" << s.mean_w2sq
            << " median_w2sq=" << s.median_w2sq << " success_rate=" << s.success_rate << '\n';
  return 0;
}

int cmd_flow(const Options& opt) {
  const ExperimentConfig c = load(opt);
  if (c.flow.x0.empty()) throw CliError("config", "flow.x0 must be set for the flow subcommand");
  const Objective f = make_objective(c.objective);
  const Vector x0 = Eigen::Map<const Vector>(c.flow.x0.data(), static_cast<Eigen::Index>(c.flow.x0.size()));
  const fs::path dir = output_dir(c, opt);
  const std::string hash = config_hash(c);
  auto emit = [&](const FlowField& field, const std::string& kind) {
    const Trajectory traj = integrate_flow(field, x0, c.flow.dt, c.flow.T);
    std::ostringstream csv;
    write_flow_csv(csv, traj, f, hash);
    const fs::path path = dir / ("flow_" + c.objective.name + "_" + kind + "_d" + std::to_string(c.dim()) + ".csv");
    write_file(path, csv.str());
    std::cout << kind << ": " << path.string() << " end=" << traj.final_state().transpose();
    if (traj.diverged_at_step) std::cout << " (diverged at step " << *traj.diverged_at_step << ")";
    std::cout << '\n';
  };
  if (c.flow.gradient) emit(NegGradientField{&f, c.flow.fd_step}, "gradient");
  if (c.flow.feedback) {
    const fs::path path = coefficient_path(c, opt);
    if (!fs::exists(path))
      throw CliError("missing_coefficients", "feedback flow needs a value-function file; " + path.string() +
                                                 " does not exist (run solve-hjb first)");
    const ValueFunctionApprox vfa = load_value_function(path);
    require_dimension(vfa, c.dim());
    emit(FeedbackField{&vfa}, "feedback");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controlled consensus-based optimization toolkit"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (default: config output_dir, under $CCBO_OUTPUT_ROOT if set)");
    sub->add_option("--coefficients", opt.coefficients, "value-function file (overrides the config)");
  };
  auto* solve = app.add_subcommand("solve-hjb", "solve the HJB equation and write the value-function file");
  add_common(solve);
  auto* run_cmd = app.add_subcommand("run", "simulate one CBO run and write its per-step CSV");
  add_common(run_cmd);
  run_cmd->add_option("--seed", opt.seed, "RNG seed (overrides cbo.seed)");
  run_cmd->add_flag("--particles", opt.particles, "also write particle positions at every step");
  auto* batch = app.add_subcommand("batch", "independent runs with seeds seed, seed+1, ...");
  add_common(batch);
  batch->add_option("--seed", opt.seed, "base seed (overrides cbo.seed)");
  batch->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* flow = app.add_subcommand("flow", "integrate the gradient and feedback flows");
  add_common(flow);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*solve) return cmd_solve_hjb(opt);
    if (*run_cmd) return cmd_run(opt);
    if (*batch) return cmd_batch(opt);
    if (*flow) return cmd_flow(opt);
  } catch (const ConfigError& e) {
    report_error("config", e.what());
    return kExitConfig;
  } catch (const CliError& e) {
    report_error(e.kind, e.what());
    return e.kind == "config" ? kExitConfig : kExitRuntime;
  } catch (const FormatError& e) {
    report_error("coefficient_file", e.what());
    return kExitRuntime;
  } catch (const BasisMismatchError& e) {
    report_error("coefficient_file", e.what());
    return kExitRuntime;
  } catch (const IllConditionedError& e) {
    report_error("ill_conditioned", e.what());
    return kExitRuntime;
  } catch (const SolveError& e) {
    report_error("solve_failed", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    report_error("runtime", e.what());
    return kExitRuntime;
  }
  return 0;
}
