#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ccbo/hjb.hpp"
#include "ccbo/metrics.hpp"
#include "ccbo/objectives.hpp"
#include "ccbo/random.hpp"

namespace ccbo {

enum class CBOVariant { Standard, Controlled, ControlledUngated };

inline std::string_view to_string(CBOVariant v) {
  switch (v) {
    case CBOVariant::Standard: return "standard";
    case CBOVariant::Controlled: return "controlled";
    case CBOVariant::ControlledUngated: return "controlled_ungated";
  }
  return "standard";
}

inline CBOVariant cbo_variant_from_string(std::string_view s) {
  if (s == "standard") return CBOVariant::Standard;
  if (s == "controlled") return CBOVariant::Controlled;
  if (s == "controlled_ungated") return CBOVariant::ControlledUngated;
  throw std::invalid_argument("unknown CBO variant: " + std::string(s));
}

struct InitSpec {
  enum class Kind { UniformBox, EquidistantGrid };
  Kind kind = Kind::UniformBox;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct CBOConfig {
  std::size_t N = 50;
  double lambda = 1.0;
  double beta = 1.0;
  double sigma = 0.7;
  double alpha = 40.0;
  double dt = 0.1;
  double T = 10.0;
  CBOVariant variant = CBOVariant::Standard;
  /// Heaviside gate on the consensus drift. Unset means: on for Controlled, off otherwise.
  std::optional<bool> gate_lambda;
  InitSpec init;
  std::uint64_t seed = 0;
  /// final W2^2 below this counts as a success (distance 0.25 to the minimizer)
  double success_threshold = 0.0625;

  bool lambda_gated() const { return gate_lambda.value_or(variant == CBOVariant::Controlled); }

  void validate(std::size_t dim) const {
    if (N < 1) throw std::invalid_argument("cbo.N must be >= 1");
    if (!(lambda >= 0.0) || !(beta >= 0.0) || !(sigma >= 0.0))
      throw std::invalid_argument("cbo.lambda, cbo.beta, cbo.sigma must be >= 0");
    if (!(alpha > 0.0)) throw std::invalid_argument("cbo.alpha must be > 0");
    if (!(dt > 0.0)) throw std::invalid_argument("cbo.dt must be > 0");
    if (!(T >= 0.0)) throw std::invalid_argument("cbo.T must be >= 0");
    if (init.lower.size() != dim || init.upper.size() != dim)
      throw std::invalid_argument("cbo.init box dimension does not match the objective");
    for (std::size_t j = 0; j < dim; ++j)
      if (!(init.lower[j] <= init.upper[j]))
        throw std::invalid_argument("cbo.init box is empty");
  }
};

/// What the controlled variants need from the offline solve.
struct Controller {
  const ValueFunctionApprox* vfa = nullptr;
};

struct ParticleEnsemble {
  Positions positions;
  double t = 0.0;
  Rng rng;

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(positions.cols()); }
};

class StepError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  std::size_t step = 0;
  double t = 0.0;
  Vector consensus;
  double variance = 0.0;
  std::optional<double> w2sq;
  std::size_t lambda_gate_count = 0;
  std::size_t beta_gate_count = 0;
};

struct RunRecord {
  std::vector<StepRecord> steps;
  Positions initial_positions;
  Positions final_positions;
  /// positions at every recorded step; filled only on request
  std::vector<Positions> trajectory;
  /// Set when the run aborted; steps then end at the last finite state.
  std::optional<std::string> error;
};

inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

inline Positions initial_positions(const InitSpec& init, std::size_t n, Rng& rng) {
  const std::size_t d = init.lower.size();
  Positions x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  if (init.kind == InitSpec::Kind::UniformBox) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            rng.uniform(init.lower[j], init.upper[j]);
    return x;
  }
  // First n points of the row-major lattice with ceil(n^(1/d)) points per axis.
  auto per_axis = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 1.0 / d) - 1e-9));
  while (static_cast<double>(std::pow(static_cast<double>(per_axis), d)) < static_cast<double>(n)) ++per_axis;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (std::size_t jj = d; jj-- > 0;) {
      const std::size_t k = rem % per_axis;
      rem /= per_axis;
      const double frac = per_axis == 1 ? 0.5 : static_cast<double>(k) / (per_axis - 1);
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jj)) =
          init.lower[jj] + frac * (init.upper[jj] - init.lower[jj]);
    }
  }
  return x;
}

inline ParticleEnsemble make_ensemble(const CBOConfig& config) {
  Rng rng(config.seed);
  Positions x = initial_positions(config.init, config.N, rng);
  return {std::move(x), 0.0, std::move(rng)};
}

inline std::span<const double> row_span(const Positions& x, Eigen::Index i) {
  return {x.row(i).data(), static_cast<std::size_t>(x.cols())};
}

/// Weighted mean with weights exp(-alpha (f_i - min f)); the shift by min f leaves
/// the result unchanged and keeps the largest weight at exactly 1.
inline Vector consensus_point(const Positions& x, std::span<const double> fvals, double alpha) {
  if (x.rows() == 0) throw std::invalid_argument("consensus_point: empty ensemble");
  const double fmin = *std::min_element(fvals.begin(), fvals.end());
  Vector num = Vector::Zero(x.cols());
  double den = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double w = std::exp(-alpha * (fvals[static_cast<std::size_t>(i)] - fmin));
    num += w * x.row(i).transpose();
    den += w;
  }
  return num / den;
}

inline std::vector<double> evaluate_all(const Positions& x, const Objective& f) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = f.eval(row_span(x, i));
  return out;
}

inline Vector consensus_point(const Positions& x, const Objective& f, double alpha) {
  const auto fvals = evaluate_all(x, f);
  return consensus_point(x, fvals, alpha);
}

struct GateCounts {
  std::size_t lambda = 0;
  std::size_t beta = 0;
};

namespace detail {

inline void require_controller(const CBOConfig& config, const Controller& ctl, std::size_t dim) {
  if (config.variant == CBOVariant::Standard) return;
  if (ctl.vfa == nullptr)
    throw std::invalid_argument("controlled CBO variants need a value function");
  if (ctl.vfa->basis.dim() != dim)
    throw std::invalid_argument("value function dimension does not match the objective");
  if (config.variant == CBOVariant::Controlled &&
      static_cast<std::size_t>(ctl.vfa->f_approx.size()) != ctl.vfa->basis.size())
    throw std::invalid_argument("controlled CBO needs the projected objective coefficients");
}

/// One Euler-Maruyama step with consensus v computed from the pre-step state.
inline GateCounts em_step_with(ParticleEnsemble& ens, const CBOConfig& config, const Objective& f,
                               const Controller& ctl, std::span<const double> fvals,
                               const Vector& v) {
  const auto n = static_cast<Eigen::Index>(ens.size());
  const auto d = static_cast<Eigen::Index>(ens.dim());
  const bool gate_l = config.lambda_gated();
  const double fv = gate_l ? f(v) : 0.0;
  const double sqdt = std::sqrt(config.dt);
  GateCounts counts;
  Positions next(n, d);
  Vector noise(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto xi = row_span(ens.positions, i);
    const double fi = fvals[static_cast<std::size_t>(i)];
    const double lam = gate_l ? config.lambda * heaviside(fi - fv) : config.lambda;
    double bet = 0.0;
    if (config.variant == CBOVariant::Controlled)
      bet = config.beta * heaviside(fi - ctl.vfa->objective_approx(xi));
    else if (config.variant == CBOVariant::ControlledUngated)
      bet = config.beta;
    if (lam != 0.0) ++counts.lambda;
    if (bet != 0.0) ++counts.beta;

    // one Gaussian vector per particle per step, drawn even when sigma = 0
    for (Eigen::Index j = 0; j < d; ++j) noise[j] = ens.rng.normal();

    const Vector diff = ens.positions.row(i).transpose() - v;
    Vector drift = -lam * diff;
    if (bet != 0.0) drift += bet * ctl.vfa->feedback(xi);
    next.row(i) = (ens.positions.row(i).transpose() + config.dt * drift +
                   config.sigma * sqdt * diff.cwiseProduct(noise))
                      .transpose();
    if (!next.row(i).allFinite()) {
      std::ostringstream os;
      os << "non-finite position for particle " << i << " at t=" << ens.t + config.dt;
      throw StepError(os.str());
    }
  }
  ens.positions = std::move(next);
  ens.t += config.dt;
  return counts;
}

}  // namespace detail

/// Advances the ensemble by one step of size config.dt.
inline GateCounts em_step(ParticleEnsemble& ens, const CBOConfig& config, const Objective& f,
                          const Controller& ctl = {}) {
  detail::require_controller(config, ctl, ens.dim());
  const auto fvals = evaluate_all(ens.positions, f);
  const Vector v = consensus_point(ens.positions, fvals, config.alpha);
  return detail::em_step_with(ens, config, f, ctl, fvals, v);
}

/// Simulates ceil(T/dt) steps and records the state at every time level,
/// including t = 0. Gate counts in record k come from the step that produced it.
inline RunRecord run(const CBOConfig& config, const Objective& f, const Controller& ctl = {},
                     bool keep_positions = false) {
  config.validate(f.dim);
  detail::require_controller(config, ctl, f.dim);
  ParticleEnsemble ens = make_ensemble(config);
  const std::size_t steps = step_count(config.T, config.dt);
  RunRecord rec;
  rec.initial_positions = ens.positions;
  rec.steps.reserve(steps + 1);

  auto record = [&](std::size_t k, const Vector& v, GateCounts g) {
    StepRecord s{k, ens.t, v, ensemble_variance(ens.positions), std::nullopt, g.lambda, g.beta};
    if (f.minimizer) s.w2sq = w2_to_dirac(ens.positions, *f.minimizer);
    rec.steps.push_back(std::move(s));
    if (keep_positions) rec.trajectory.push_back(ens.positions);
  };

  auto fvals = evaluate_all(ens.positions, f);
  Vector v = consensus_point(ens.positions, fvals, config.alpha);
  record(0, v, {});
  for (std::size_t k = 1; k <= steps; ++k) {
    GateCounts g;
    try {
      g = detail::em_step_with(ens, config, f, ctl, fvals, v);
    } catch (const StepError& e) {
      rec.error = e.what();
      break;
    }
    ens.t = static_cast<double>(k) * config.dt;
    fvals = evaluate_all(ens.positions, f);
    v = consensus_point(ens.positions, fvals, config.alpha);
    record(k, v, g);
  }
  rec.final_positions = ens.positions;
  return rec;
}

struct BatchSummary {
  std::size_t n_runs = 0;
  std::size_t failed_runs = 0;
  double mean_w2sq = 0.0;
  double median_w2sq = 0.0;
  double std_w2sq = 0.0;
  double success_rate = 0.0;
  double success_threshold = 0.0;
  std::vector<double> final_w2sq;
  std::vector<RunRecord> runs;
};

/// Independent runs with seeds base_seed + k, spread over up to `jobs` threads.
/// Failed runs are recorded and excluded from the statistics.
inline BatchSummary run_batch(const CBOConfig& config, const Objective& f, const Controller& ctl,
                              std::size_t n_runs, std::uint64_t base_seed, std::size_t jobs = 1) {
  if (n_runs < 1) throw std::invalid_argument("run_batch: n_runs must be >= 1");
  if (!f.minimizer) throw std::invalid_argument("run_batch: objective has no known minimizer");
  config.validate(f.dim);
  detail::require_controller(config, ctl, f.dim);

  BatchSummary out;
  out.n_runs = n_runs;
  out.success_threshold = config.success_threshold;
  out.runs.resize(n_runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < n_runs;) {
      CBOConfig c = config;
      c.seed = base_seed + k;
      try {
        out.runs[k] = run(c, f, ctl);
      } catch (const std::exception& e) {
        out.runs[k].error = e.what();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, n_runs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  std::size_t successes = 0;
  for (const auto& r : out.runs) {
    if (r.error || r.steps.empty() || !r.steps.back().w2sq) {
      ++out.failed_runs;
      continue;
    }
    const double w = *r.steps.back().w2sq;
    out.final_w2sq.push_back(w);
    if (w < config.success_threshold) ++successes;
  }
  const auto& w = out.final_w2sq;
  if (!w.empty()) {
    double sum = 0.0;
    for (double x : w) sum += x;
    out.mean_w2sq = sum / static_cast<double>(w.size());
    double ss = 0.0;
    for (double x : w) ss += (x - out.mean_w2sq) * (x - out.mean_w2sq);
    out.std_w2sq = w.size() > 1 ? std::sqrt(ss / static_cast<double>(w.size() - 1)) : 0.0;
    auto sorted = w;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    out.median_w2sq = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  } else {
    out.mean_w2sq = out.median_w2sq = out.std_w2sq = std::numeric_limits<double>::quiet_NaN();
  }
  out.success_rate = static_cast<double>(successes) / static_cast<double>(n_runs);
  return out;
}

}  // namespace ccbo
