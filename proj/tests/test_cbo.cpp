#include <gtest/gtest.h>

#include <cmath>

#include "ccbo/cbo.hpp"
#include "ccbo/galerkin.hpp"
#include "oracles.hpp"

using namespace ccbo;

namespace {

Objective identity_1d() {
  Objective f;
  f.name = "identity";
  f.dim = 1;
  f.eval = [](std::span<const double> x) { return x[0]; };
  return f;
}

CBOConfig config_2d(CBOVariant v, double lo, double hi) {
  CBOConfig c;
  c.variant = v;
  c.init.lower = {lo, lo};
  c.init.upper = {hi, hi};
  return c;
}

ValueFunctionApprox rastrigin_vfa() {
  const MultiIndexBasis b(BasisFamily::Legendre, BoxDomain::cube(2, -2, 2), Truncation::hyperbolic_cross(2));
  return discount_continuation(GalerkinWorkspace(b, assemble_load(b, rastrigin(2), 0, 0)), {}).vfa;
}

/// V = s x^2 for f = x^2, with the objective projection set exactly.
ValueFunctionApprox exact_quadratic_vfa() {
  const MultiIndexBasis b(BasisFamily::Monomial, BoxDomain::cube(1, -2, 2), Truncation::total_degree(2));
  const GalerkinWorkspace ws(b, assemble_load(b, quadratic(Matrix::Identity(1, 1)), 0, 0));
  ValueFunctionApprox vfa = discount_continuation(ws, {}).vfa;
  vfa.f_approx = Vector::Zero(3);
  vfa.f_approx[2] = 1.0;
  return vfa;
}

Positions column(std::initializer_list<double> v) {
  Positions x(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double e : v) x(i++, 0) = e;
  return x;
}

}  // namespace

TEST(Consensus, SingleParticle) {
  Positions x(1, 3);
  x << 0.3, -1.1, 2.5;
  const std::vector<double> f{7.0};
  EXPECT_EQ(consensus_point(x, f, 40.0), x.row(0).transpose());
}

TEST(Consensus, CoincidentParticles) {
  Positions x(5, 2);
  x.rowwise() = Eigen::RowVector2d(0.1, -0.7);
  const std::vector<double> f{3.0, 1.0, 2.0, 5.0, 4.0};
  const Vector v = consensus_point(x, f, 40.0);
  EXPECT_DOUBLE_EQ(v[0], 0.1);
  EXPECT_DOUBLE_EQ(v[1], -0.7);
}

TEST(Consensus, ThreeParticleExample) {
  const Positions x = column({0.0, 1.0, 2.0});
  const long double e40 = std::exp(-40.0L), e80 = std::exp(-80.0L);
  const long double ref = (e40 + 2.0L * e80) / (1.0L + e40 + e80);
  const Vector v = consensus_point(x, identity_1d(), 40.0);
  EXPECT_NEAR(v[0], static_cast<double>(ref), 1e-15);
  EXPECT_NEAR(v[0], 4.2483542552915890134e-18, 1e-15);
}

TEST(Consensus, ShiftInvariance) { EXPECT_EQ(oracle::check_consensus_shift(21), ""); }
TEST(Consensus, HullContainment) { EXPECT_EQ(oracle::check_consensus_hull(22), ""); }
TEST(Consensus, LargeAlphaSelectsArgmin) { EXPECT_EQ(oracle::check_alpha_limit(23), ""); }

TEST(Consensus, NoUnderflowAtLargeValues) {
  const Positions x = column({1.0, 3.0});
  const std::vector<double> f{1000.0, 1000.5};
  const Vector v = consensus_point(x, f, 40.0);
  EXPECT_TRUE(v.allFinite());
  EXPECT_NEAR(v[0], (1.0 + 3.0 * std::exp(-20.0)) / (1.0 + std::exp(-20.0)), 1e-15);
}

TEST(EmStep, TwoParticleExample) {
  CBOConfig c;
  c.N = 2;
  c.sigma = 0.0;
  c.beta = 0.0;
  c.init.lower = {0.0};
  c.init.upper = {2.0};
  ParticleEnsemble ens{column({0.0, 2.0}), 0.0, Rng(1)};
  const GateCounts g = em_step(ens, c, identity_1d());
  EXPECT_NEAR(ens.positions(1, 0), 1.8, 1e-15);
  EXPECT_NEAR(ens.positions(0, 0), 0.0, 1e-15);
  EXPECT_EQ(g.lambda, 2u);
  EXPECT_EQ(g.beta, 0u);
  EXPECT_DOUBLE_EQ(ens.t, 0.1);
}

TEST(EmStep, CoincidentEnsembleIsStationary) {
  CBOConfig c = config_2d(CBOVariant::Standard, -1, 1);
  c.N = 4;
  Positions x(4, 2);
  x.rowwise() = Eigen::RowVector2d(0.4, -0.2);
  ParticleEnsemble ens{x, 0.0, Rng(3)};
  for (int k = 0; k < 20; ++k) em_step(ens, c, ackley(2));
  EXPECT_EQ(ens.positions, x);
}

TEST(EmStep, ControlledNeedsController) {
  CBOConfig c = config_2d(CBOVariant::Controlled, -1, 1);
  EXPECT_THROW(run(c, rastrigin(2)), std::invalid_argument);
  const ValueFunctionApprox vfa = rastrigin_vfa();
  EXPECT_THROW(run(c, rastrigin(3), Controller{&vfa}), std::invalid_argument);
}

TEST(GateReduction, ZeroBetaControlledEqualsStandard) {
  const ValueFunctionApprox vfa = rastrigin_vfa();
  CBOConfig ctl = config_2d(CBOVariant::Controlled, -1, -0.5);
  ctl.beta = 0.0;
  CBOConfig std_gated = config_2d(CBOVariant::Standard, -1, -0.5);
  std_gated.gate_lambda = true;
  const RunRecord a = run(ctl, rastrigin(2), Controller{&vfa});
  const RunRecord b = run(std_gated, rastrigin(2));
  EXPECT_EQ(a.final_positions, b.final_positions);
  for (std::size_t k = 0; k < a.steps.size(); ++k) EXPECT_EQ(a.steps[k].consensus, b.steps[k].consensus);

  ctl.gate_lambda = false;
  EXPECT_EQ(run(ctl, rastrigin(2), Controller{&vfa}).final_positions,
            run(config_2d(CBOVariant::Standard, -1, -0.5), rastrigin(2)).final_positions);
}

TEST(GateReduction, ExactObjectiveProjectionMatchesUngated) {
  const ValueFunctionApprox vfa = exact_quadratic_vfa();
  const Objective f = quadratic(Matrix::Identity(1, 1));
  CBOConfig c;
  c.init.lower = {-1.5};
  c.init.upper = {1.5};
  c.N = 20;
  c.variant = CBOVariant::Controlled;
  c.gate_lambda = false;
  const RunRecord a = run(c, f, Controller{&vfa});
  c.variant = CBOVariant::ControlledUngated;
  const RunRecord b = run(c, f, Controller{&vfa});
  EXPECT_TRUE(oracle::same_run(a, b));
  for (std::size_t k = 1; k < a.steps.size(); ++k) EXPECT_EQ(a.steps[k].beta_gate_count, c.N);
}

TEST(GateReduction, NoNoiseNoConsensusIsFeedbackFlow) {
  const ValueFunctionApprox vfa = exact_quadratic_vfa();
  const Objective f = quadratic(Matrix::Identity(1, 1));
  CBOConfig c;
  c.variant = CBOVariant::Controlled;
  c.sigma = 0.0;
  c.lambda = 0.0;
  c.N = 7;
  c.T = 2.0;
  c.init.lower = {-1.8};
  c.init.upper = {1.9};
  const RunRecord rec = run(c, f, Controller{&vfa}, true);
  for (Eigen::Index i = 0; i < rec.initial_positions.rows(); ++i) {
    const Trajectory t = integrate_flow(FeedbackField{&vfa}, rec.initial_positions.row(i).transpose(), c.dt, c.T);
    ASSERT_EQ(t.states.size(), rec.trajectory.size());
    for (std::size_t k = 0; k < t.states.size(); ++k) EXPECT_NEAR(rec.trajectory[k](i, 0), t.states[k][0], 1e-12);
  }
}

TEST(Run, ZeroHorizonHasOnlyInitialRecord) {
  CBOConfig c = config_2d(CBOVariant::Standard, -1, 1);
  c.T = 0.0;
  const RunRecord rec = run(c, ackley(2));
  ASSERT_EQ(rec.steps.size(), 1u);
  EXPECT_EQ(rec.steps[0].t, 0.0);
  EXPECT_EQ(rec.final_positions, rec.initial_positions);
}

TEST(Run, RecordsEveryStep) {
  CBOConfig c = config_2d(CBOVariant::Standard, -1, 1);
  c.T = 1.05;
  const RunRecord rec = run(c, ackley(2));
  ASSERT_EQ(rec.steps.size(), 12u);
  for (std::size_t k = 0; k < rec.steps.size(); ++k) {
    EXPECT_EQ(rec.steps[k].step, k);
    EXPECT_GE(rec.steps[k].variance, 0.0);
    ASSERT_TRUE(rec.steps[k].w2sq);
    EXPECT_GE(*rec.steps[k].w2sq, 0.0);
  }
  EXPECT_TRUE(rec.trajectory.empty());
}

TEST(Run, SeedDeterminism) {
  const ValueFunctionApprox vfa = rastrigin_vfa();
  EXPECT_EQ(oracle::check_seed_determinism(rastrigin(2), config_2d(CBOVariant::Controlled, -1, -0.5), Controller{&vfa}), "");
  EXPECT_EQ(oracle::check_seed_determinism(ackley(2), config_2d(CBOVariant::Standard, -1, 0.5), {}), "");
}

TEST(Run, GridInitialization) {
  CBOConfig c = config_2d(CBOVariant::Standard, -1, 0.5);
  c.init.kind = InitSpec::Kind::EquidistantGrid;
  c.T = 0.0;
  const RunRecord rec = run(c, ackley(2));
  // 50 points from the 8 x 8 lattice, row-major
  EXPECT_DOUBLE_EQ(rec.initial_positions(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(rec.initial_positions(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(rec.initial_positions(7, 1), 0.5);
  EXPECT_DOUBLE_EQ(rec.initial_positions(8, 0), -1.0 + 1.5 / 7.0);
  c.seed = 99;
  EXPECT_EQ(run(c, ackley(2)).initial_positions, rec.initial_positions);
}

TEST(Run, StandardAckleyFromFavorableGridConverges) {
  CBOConfig c = config_2d(CBOVariant::Standard, -1, 0.5);
  c.init.kind = InitSpec::Kind::EquidistantGrid;
  const RunRecord rec = run(c, ackley(2));
  EXPECT_LE(*rec.steps.back().w2sq, 1e-4 * *rec.steps.front().w2sq);
}

TEST(Batch, SingleRunSummary) {
  const CBOConfig c = config_2d(CBOVariant::Standard, -1, 0.5);
  const BatchSummary s = run_batch(c, ackley(2), {}, 1, 5);
  CBOConfig one = c;
  one.seed = 5;
  const RunRecord r = run(one, ackley(2));
  ASSERT_EQ(s.final_w2sq.size(), 1u);
  EXPECT_EQ(s.final_w2sq[0], *r.steps.back().w2sq);
  EXPECT_EQ(s.mean_w2sq, s.final_w2sq[0]);
  EXPECT_EQ(s.median_w2sq, s.final_w2sq[0]);
  EXPECT_EQ(s.std_w2sq, 0.0);
  EXPECT_TRUE(oracle::same_run(s.runs[0], r));
}

TEST(Batch, IdenticalSeedsAndThreadCountsGiveIdenticalSummaries) {
  const CBOConfig c = config_2d(CBOVariant::Standard, -1, -0.5);
  const BatchSummary a = run_batch(c, rastrigin(2), {}, 12, 40, 1);
  const BatchSummary b = run_batch(c, rastrigin(2), {}, 12, 40, 4);
  EXPECT_EQ(a.final_w2sq, b.final_w2sq);
  EXPECT_EQ(a.mean_w2sq, b.mean_w2sq);
  EXPECT_EQ(a.median_w2sq, b.median_w2sq);
  EXPECT_EQ(a.std_w2sq, b.std_w2sq);
  EXPECT_EQ(a.success_rate, b.success_rate);
  EXPECT_EQ(a.failed_runs, 0u);
}

TEST(Batch, SuccessRateUsesThreshold) {
  CBOConfig c = config_2d(CBOVariant::Standard, -1, 0.5);
  const BatchSummary s = run_batch(c, ackley(2), {}, 10, 0);
  std::size_t below = 0;
  for (double w : s.final_w2sq) below += w < c.success_threshold;
  EXPECT_DOUBLE_EQ(s.success_rate, static_cast<double>(below) / 10.0);
  EXPECT_THROW(run_batch(c, ackley(2), {}, 0, 0), std::invalid_argument);
}
