#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ccbo/basis.hpp"
#include "ccbo/galerkin.hpp"
#include "ccbo/objectives.hpp"
#include "ccbo/random.hpp"

namespace ccbo {

struct LoadMode {
  enum class Kind { Auto, Separable, MonteCarlo };
  Kind kind = Kind::Auto;
  std::size_t n_mc = 1'000'000;
  std::uint64_t seed = 0;
};

struct HJBConfig {
  double mu = 0.1;
  double epsilon = 0.1;
  double tol = 1e-8;
  int max_inner_iters = 200;
  double theta = 0.5;
  double tol_mu = 0.01;
  LoadMode load;

  void validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("hjb.mu must be > 0");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("hjb.epsilon must be in (0, 1]");
    if (!(tol > 0.0)) throw std::invalid_argument("hjb.tol must be > 0");
    if (max_inner_iters < 1) throw std::invalid_argument("hjb.max_inner_iters must be >= 1");
    if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("hjb.theta must be in (0, 1)");
    if (!(tol_mu > 0.0)) throw std::invalid_argument("hjb.tol_mu must be > 0");
  }
};

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, double mu, int iteration)
      : std::runtime_error(what), mu_(mu), iteration_(iteration) {}
  double mu() const { return mu_; }
  int iteration() const { return iteration_; }

 private:
  double mu_;
  int iteration_;
};

class NonConvergenceError : public SolveError {
 public:
  NonConvergenceError(double mu, int iterations, double last_change)
      : SolveError(message(mu, iterations, last_change), mu, iterations),
        last_change_(last_change) {}
  double last_change() const { return last_change_; }

 private:
  static std::string message(double mu, int iterations, double change) {
    std::ostringstream os;
    os << "successive approximation did not converge at mu=" << mu << " after " << iterations
       << " iterations (last change " << change << ")";
    return os.str();
  }
  double last_change_;
};

/// Polynomial value function V(x) = Phi(x)^T c and its feedback u = -(1/eps) grad V.
struct ValueFunctionApprox {
  MultiIndexBasis basis;
  Vector coeffs;
  double epsilon = 0.1;
  /// Coefficients of the L2 projection of the objective, used by the control gate.
  Vector f_approx;
  std::vector<double> mu_schedule;
  std::string config_hash;

  double value(std::span<const double> x) const { return basis.eval(x).dot(coeffs); }
  double value(const Vector& x) const { return value(as_span(x)); }

  Vector feedback(std::span<const double> x) const {
    return -(1.0 / epsilon) * (basis.gradient(x).transpose() * coeffs);
  }
  Vector feedback(const Vector& x) const { return feedback(as_span(x)); }

  double objective_approx(std::span<const double> x) const {
    return f_approx.size() == 0 ? 0.0 : basis.eval(x).dot(f_approx);
  }

 private:
  static std::span<const double> as_span(const Vector& x) {
    return {x.data(), static_cast<std::size_t>(x.size())};
  }
};

inline double eval_value(const ValueFunctionApprox& vfa, std::span<const double> x) {
  return vfa.value(x);
}
inline Vector eval_feedback(const ValueFunctionApprox& vfa, std::span<const double> x) {
  return vfa.feedback(x);
}

struct IterationLog {
  double change = 0.0;
  /// max over the probe points of V^{(m+1)} - V^{(m)}; positive values break monotonicity
  double max_increase = 0.0;
};

struct StageReport {
  double mu = 0.0;
  int iterations = 0;
  double final_change = 0.0;
  /// infinity norm of the projected GHJB residual at the returned coefficients
  double residual_norm = 0.0;
  std::vector<IterationLog> log;
  bool monotone = true;
};

struct SolveReport {
  std::vector<StageReport> stages;
  double mass_condition = 0.0;
  std::string warning;

  int total_iterations() const {
    int t = 0;
    for (const auto& s : stages) t += s.iterations;
    return t;
  }
};

/// Slack for the logged monotonicity diagnostic, relative to max |V|.
inline constexpr double kMonotonicitySlack = 1e-6;
inline constexpr std::size_t kMonotonicityProbes = 50;
/// A stage aborts when the coefficient norm grows by more than this in one step.
inline constexpr double kDivergenceGrowth = 10.0;

/// One projected policy-evaluation step:
/// (-mu * mass + G(c_prev)) c_next = -F - L(c_prev).
inline Vector ghjb_step(const GalerkinWorkspace& ws, const Vector& c_prev, double mu,
                        double epsilon, int iteration = 0) {
  if (!c_prev.allFinite()) throw SolveError("ghjb_step: non-finite coefficients", mu, iteration);
  // Solved in the basis normalized by the mass diagonal: s A s (c / s) = s b.
  const Vector s = ws.mass().diagonal().cwiseSqrt().cwiseInverse();
  const Matrix system =
      s.asDiagonal() * (-mu * ws.mass() + ws.apply_G(c_prev, epsilon)) * s.asDiagonal();
  const Vector rhs = s.cwiseProduct(-ws.load() - ws.apply_L(c_prev, epsilon));
  const Eigen::PartialPivLU<Matrix> lu(system);
  const double rcond = lu.rcond();
  if (!(rcond > std::numeric_limits<double>::epsilon())) {
    std::ostringstream os;
    os << "GHJB system is singular or ill-conditioned (rcond " << rcond << ") at mu=" << mu
       << ", iteration " << iteration;
    throw SolveError(os.str(), mu, iteration);
  }
  Vector c = s.cwiseProduct(lu.solve(rhs));
  if (!c.allFinite()) throw SolveError("ghjb_step: solve produced non-finite values", mu, iteration);
  return c;
}

/// Galerkin residual (-mu M + G(c)) c + F + L(c), which vanishes at a fixed point.
inline Vector ghjb_residual(const GalerkinWorkspace& ws, const Vector& c, double mu,
                            double epsilon) {
  return (-mu * ws.mass() + ws.apply_G(c, epsilon)) * c + ws.load() + ws.apply_L(c, epsilon);
}

/// Coefficient-space surrogate for the control change norm.
inline double control_change(const Vector& c_next, const Vector& c_prev) {
  return (c_next - c_prev).norm() / std::max(1.0, c_prev.norm());
}

namespace detail {

inline Matrix monotonicity_probes(const MultiIndexBasis& basis) {
  Rng rng(0x6d6f6e6f746f6e65ULL);
  const auto d = basis.dim();
  Matrix phi(static_cast<Eigen::Index>(kMonotonicityProbes), static_cast<Eigen::Index>(basis.size()));
  std::vector<double> x(d);
  for (std::size_t s = 0; s < kMonotonicityProbes; ++s) {
    for (std::size_t p = 0; p < d; ++p)
      x[p] = rng.uniform(basis.domain().lower(p), basis.domain().upper(p));
    phi.row(static_cast<Eigen::Index>(s)) = basis.eval(x).transpose();
  }
  return phi;
}

}  // namespace detail

struct StageResult {
  Vector coeffs;
  StageReport report;
};

/// Policy iteration at a fixed discount: repeat ghjb_step until the control change
/// drops to config.tol. Throws NonConvergenceError after max_inner_iters.
inline StageResult successive_approximation(const GalerkinWorkspace& ws, const HJBConfig& config,
                                            const Vector& c_init, double mu) {
  const Matrix probes = detail::monotonicity_probes(ws.basis());
  StageResult out;
  out.report.mu = mu;
  Vector c = c_init;
  Vector v_prev = probes * c;
  bool converged = false;
  for (int m = 1; m <= config.max_inner_iters; ++m) {
    Vector c_next = ghjb_step(ws, c, mu, config.epsilon, m);
    const double change = control_change(c_next, c);
    const double prev_norm = c.norm();
    if (prev_norm > 0.0 && c_next.norm() > kDivergenceGrowth * prev_norm) {
      std::ostringstream os;
      os << "coefficient norm grew from " << prev_norm << " to " << c_next.norm()
         << " in one step at mu=" << mu << ", iteration " << m;
      throw SolveError(os.str(), mu, m);
    }
    const Vector v_next = probes * c_next;
    IterationLog entry{change, (v_next - v_prev).maxCoeff()};
    // the first step of a stage follows a change of discount, not a policy update
    if (m > 1) {
      const double scale = std::max(1.0, v_next.cwiseAbs().maxCoeff());
      if (entry.max_increase > kMonotonicitySlack * scale) out.report.monotone = false;
    }
    out.report.log.push_back(entry);
    out.report.iterations = m;
    out.report.final_change = change;
    c = std::move(c_next);
    v_prev = v_next;
    if (change <= config.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NonConvergenceError(mu, out.report.iterations, out.report.final_change);
  out.report.residual_norm = ghjb_residual(ws, c, mu, config.epsilon).cwiseAbs().maxCoeff();
  out.coeffs = std::move(c);
  return out;
}

struct HJBSolution {
  ValueFunctionApprox vfa;
  SolveReport report;
};

/// Discount continuation: solve at mu, theta*mu, theta^2*mu, ... while the next
/// discount stays above tol_mu, warm-starting each stage from the previous one.
/// The first stage always runs and starts from the zero control.
inline HJBSolution discount_continuation(const GalerkinWorkspace& ws, const HJBConfig& config) {
  config.validate();
  HJBSolution sol{ValueFunctionApprox{ws.basis(), Vector::Zero(static_cast<Eigen::Index>(ws.size())),
                                      config.epsilon, ws.project(ws.load()), {}, {}},
                  {}};
  sol.report.mass_condition = ws.mass_condition();
  sol.report.warning = ws.warning();
  Vector c = Vector::Zero(static_cast<Eigen::Index>(ws.size()));
  double mu = config.mu;
  for (;;) {
    StageResult stage;
    try {
      stage = successive_approximation(ws, config, c, mu);
    } catch (const NonConvergenceError&) {
      throw;
    } catch (const SolveError& e) {
      std::ostringstream os;
      os << "continuation stage mu=" << mu << " failed: " << e.what();
      throw SolveError(os.str(), mu, e.iteration());
    }
    c = std::move(stage.coeffs);
    sol.vfa.mu_schedule.push_back(mu);
    sol.report.stages.push_back(std::move(stage.report));
    mu *= config.theta;
    if (!(mu > config.tol_mu)) break;
  }
  sol.vfa.coeffs = std::move(c);
  return sol;
}

/// Single stage at config.mu from the zero control (plain successive approximation).
inline HJBSolution solve_single_stage(const GalerkinWorkspace& ws, const HJBConfig& config) {
  HJBConfig single = config;
  single.tol_mu = config.mu;
  return discount_continuation(ws, single);
}

// ---------------------------------------------------------------------------
// Deterministic flows

struct FeedbackField {
  const ValueFunctionApprox* vfa;
};
struct NegGradientField {
  const Objective* objective;
  double fd_step = 1e-6;
};
using FlowField = std::variant<FeedbackField, NegGradientField>;

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  /// set when the state left the ball of radius kFlowDivergenceRadius
  std::optional<std::size_t> diverged_at_step;

  const Vector& final_state() const { return states.back(); }
};

inline constexpr double kFlowDivergenceRadius = 1e6;

/// Number of fixed steps covering [0, T]; tolerant of T/dt landing a rounding error
/// above an integer.
inline std::size_t step_count(double horizon, double dt) {
  if (horizon <= 0.0) return 0;
  const double ratio = horizon / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, nearest))
    return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(ratio));
}

inline Vector evaluate_field(const FlowField& field, const Vector& x) {
  const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  if (const auto* fb = std::get_if<FeedbackField>(&field)) return fb->vfa->feedback(xs);
  const auto& ng = std::get<NegGradientField>(field);
  return -finite_diff_gradient(*ng.objective, xs, ng.fd_step);
}

/// Forward Euler for x' = field(x) over ceil(T/dt) steps. Stops early (and records
/// the step) if the state diverges.
inline Trajectory integrate_flow(const FlowField& field, const Vector& x0, double dt, double horizon) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_flow: dt must be > 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("integrate_flow: T must be > 0");
  const std::size_t steps = step_count(horizon, dt);
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  Vector x = x0;
  for (std::size_t k = 1; k <= steps; ++k) {
    x += dt * evaluate_field(field, x);
    traj.times.push_back(static_cast<double>(k) * dt);
    traj.states.push_back(x);
    if (!x.allFinite() || x.norm() > kFlowDivergenceRadius) {
      traj.diverged_at_step = k;
      break;
    }
  }
  return traj;
}

}  // namespace ccbo
