#pragma once

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ccbo/cbo.hpp"
#include "ccbo/config.hpp"
#include "ccbo/hjb.hpp"

namespace ccbo {

/// 17 significant digits, enough to read back the same double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string run_csv_header(std::size_t dim) {
  std::string h = "step,t";
  for (std::size_t j = 1; j <= dim; ++j) h += ",v_" + std::to_string(j);
  h += ",variance,w2sq,lambda_gate_count,beta_gate_count";
  return h;
}

/// One row per recorded step. Trailer lines start with '#'.
inline void write_run_csv(std::ostream& out, const RunRecord& rec, std::size_t dim,
                          const std::string& hash) {
  out << run_csv_header(dim) << '\n';
  for (const auto& s : rec.steps) {
    out << s.step << ',' << format_double(s.t);
    for (Eigen::Index j = 0; j < s.consensus.size(); ++j) out << ',' << format_double(s.consensus[j]);
    out << ',' << format_double(s.variance) << ',' << (s.w2sq ? format_double(*s.w2sq) : "nan") << ','
        << s.lambda_gate_count << ',' << s.beta_gate_count << '\n';
  }
  if (rec.error) out << "# error: " << *rec.error << '\n';
  out << "# config_hash=" << hash << '\n';
}

inline std::string particles_csv_header(std::size_t dim) {
  std::string h = "t,particle";
  for (std::size_t j = 1; j <= dim; ++j) h += ",x_" + std::to_string(j);
  return h;
}

/// Particle positions at every recorded step, or only the first and last when the
/// run did not keep its trajectory.
inline void write_particles_csv(std::ostream& out, const RunRecord& rec, const std::string& hash) {
  const auto dim = static_cast<std::size_t>(rec.initial_positions.cols());
  out << particles_csv_header(dim) << '\n';
  auto dump = [&](const Positions& x, double t) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out << format_double(t) << ',' << i;
      for (Eigen::Index j = 0; j < x.cols(); ++j) out << ',' << format_double(x(i, j));
      out << '\n';
    }
  };
  if (!rec.trajectory.empty()) {
    for (std::size_t k = 0; k < rec.trajectory.size(); ++k) dump(rec.trajectory[k], rec.steps[k].t);
  } else {
    dump(rec.initial_positions, 0.0);
    dump(rec.final_positions, rec.steps.empty() ? 0.0 : rec.steps.back().t);
  }
  out << "# config_hash=" << hash << '\n';
}

inline std::string flow_csv_header(std::size_t dim) {
  std::string h = "t";
  for (std::size_t j = 1; j <= dim; ++j) h += ",x_" + std::to_string(j);
  h += ",f";
  return h;
}

inline void write_flow_csv(std::ostream& out, const Trajectory& traj, const Objective& f,
                           const std::string& hash) {
  out << flow_csv_header(static_cast<std::size_t>(traj.states.front().size())) << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const Vector& x = traj.states[k];
    out << format_double(traj.times[k]);
    for (Eigen::Index j = 0; j < x.size(); ++j) out << ',' << format_double(x[j]);
    out << ',' << format_double(f(x)) << '\n';
  }
  if (traj.diverged_at_step) out << "# diverged at step " << *traj.diverged_at_step << '\n';
  out << "# config_hash=" << hash << '\n';
}

inline nlohmann::json summary_to_json(const BatchSummary& s, const ExperimentConfig& c,
                                      std::uint64_t base_seed) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); };
  nlohmann::json j;
  j["objective"] = c.objective.name;
  j["dim"] = c.dim();
  j["variant"] = std::string(to_string(c.cbo.variant));
  j["N"] = c.cbo.N;
  j["base_seed"] = base_seed;
  j["n_runs"] = s.n_runs;
  j["failed_runs"] = s.failed_runs;
  j["mean_w2sq"] = num(s.mean_w2sq);
  j["median_w2sq"] = num(s.median_w2sq);
  j["std_w2sq"] = num(s.std_w2sq);
  j["success_rate"] = s.success_rate;
  j["success_threshold"] = s.success_threshold;
  j["final_w2sq"] = s.final_w2sq;
  j["config_hash"] = config_hash(c);
  return j;
}

inline std::string solve_report_text(const SolveReport& r, const ValueFunctionApprox& vfa) {
  std::ostringstream os;
  os << "basis: " << to_string(vfa.basis.family()) << ' ' << to_string(vfa.basis.truncation().kind)
     << ' ' << vfa.basis.truncation().degree << ", d=" << vfa.basis.dim() << ", n=" << vfa.basis.size()
     << '\n';
  os << "mass condition number: " << r.mass_condition << '\n';
  if (!r.warning.empty()) os << "warning: " << r.warning << '\n';
  for (const auto& s : r.stages)
    os << "stage mu=" << s.mu << ": iterations=" << s.iterations << " final_change=" << s.final_change
       << " residual=" << s.residual_norm << " monotone=" << (s.monotone ? "yes" : "no") << '\n';
  os << "total iterations: " << r.total_iterations() << '\n';
  os << "config_hash=" << vfa.config_hash << '\n';
  return os.str();
}

/// Output file stem shared by run CSVs and batch summaries.
inline std::string run_stem(const ExperimentConfig& c, std::uint64_t seed) {
  std::ostringstream os;
  os << c.objective.name << '_' << to_string(c.cbo.variant) << "_d" << c.dim() << "_N" << c.cbo.N
     << "_seed" << seed;
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace ccbo
