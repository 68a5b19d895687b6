#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace qspline;
using namespace qspline::testing;

namespace {

const cplx I{0.0, 1.0};

// Intrinsic field -D_x^3 U_x - R(D_xU_x, U_x)U_x from covariant differences.
MatrixArray intrinsic_rhs(const SegmentCurve& u) {
  const MatrixArray t0 = covariant_derivative(u, 0), t1 = covariant_derivative(u, 1), t3 = covariant_derivative(u, 3);
  MatrixArray out;
  for (std::size_t j = 0; j < u.samples.size(); ++j) {
    const ComplexMatrix& w = u.samples[j];
    const ComplexMatrix x = t1[j] * w.adjoint(), y = t0[j] * w.adjoint();
    out.push_back(ComplexMatrix(-t3[j] - curvature(x, y, y) * w));
  }
  return out;
}

double rhs_form_gap(int m) {
  const SegmentCurve u = sample(twisted, m);
  const MatrixArray ext = rhs_U(u), intr = intrinsic_rhs(u);
  double gap = 0.0;
  for (int j = m / 4; j <= 3 * m / 4; ++j) {
    const auto k = static_cast<std::size_t>(j);
    gap = std::max(gap, frob_norm(project_tangent(ext[k], u.samples[k]) - intr[k]));
  }
  return gap;
}

TEST(FlowSolver, RhsUOfConstantIsZero) {
  std::mt19937_64 rng(1);
  const ComplexMatrix c = random_unitary(rng, 2);
  for (const auto& r : rhs_U(sample([&](double) { return c; }, 16))) EXPECT_LT(frob_norm(r), 1e-9);
}

TEST(FlowSolver, RhsUOfGeodesicIsTangentiallyZero) {
  const SegmentCurve u = sample([](double x) { return expm_skew(x * (0.8 * isz() + 0.3 * isx())); }, 64);
  const MatrixArray r = rhs_U(u);
  for (std::size_t j = 0; j < r.size(); ++j) EXPECT_LT(frob_norm(project_tangent(r[j], u.samples[j])), 1e-2);
}

double quartic_rhs_error(int m) {
  // Intrinsic field -i theta'''' sigma_z U = -24 i sigma_z U.
  const SegmentCurve u = phase_curve([](double x) { return x * x * x * x; }, m);
  const MatrixArray r = rhs_U(u);
  double e = 0.0;
  for (int j = m / 4; j <= 3 * m / 4; ++j) {
    const auto k = static_cast<std::size_t>(j);
    e = std::max(e, frob_norm(project_tangent(r[k], u.samples[k]) - (-24.0 * isz() * u.samples[k])));
  }
  return e;
}

TEST(FlowSolver, RhsUOfQuarticPhase) {
  EXPECT_LT(quartic_rhs_error(64), 0.05);
  EXPECT_GE(observed_order(quartic_rhs_error(32), quartic_rhs_error(64)), 1.8);
  EXPECT_GE(observed_order(quartic_rhs_error(64), quartic_rhs_error(128)), 1.8);
}

TEST(FlowSolver, RhsUExtrinsicMatchesIntrinsic) {
  const double g32 = rhs_form_gap(32), g64 = rhs_form_gap(64), g128 = rhs_form_gap(128);
  EXPECT_GE(observed_order(g32, g64), 1.8);
  EXPECT_GE(observed_order(g64, g128), 1.8);
  EXPECT_THROW(rhs_U(sample(twisted, 8)), Error);
}

TEST(FlowSolver, RhsV) {
  for (const auto& r : rhs_V(sample([](double x) { return expm_skew(x * isy()); }, 64), 0.7)) {
    EXPECT_LT(frob_norm(r), 1e-3);
  }
  const SegmentCurve v = phase_curve([](double x) { return x * x; }, 128);
  const MatrixArray r = rhs_V(v, 1.0);
  for (std::size_t j = 0; j < r.size(); ++j) EXPECT_NEAR(frob_norm(r[j]), 2.0 * std::sqrt(2.0), 1e-2);
  const MatrixArray r2 = rhs_V(v, 0.5);
  for (std::size_t j = 0; j < r.size(); ++j) EXPECT_NEAR(frob_norm(r2[j]), 0.25 * frob_norm(r[j]), 1e-12);
}

TEST(FlowSolver, B2OnDiagonalJet) {
  // W = exp(i theta sigma_z): b2 = (3 theta'' theta' + i theta'^3 sigma_z) W.
  const double t = 0.3, t1 = 0.7, t2 = -1.1;
  const ComplexMatrix w = phase_embed(t);
  NodeJet jet;
  jet.w = w;
  jet.w1 = t1 * isz() * w;
  jet.w2 = (t2 * isz() - t1 * t1 * identity(2)) * w;
  jet.w3 = ComplexMatrix::Zero(2, 2);
  const ComplexMatrix expect = (3.0 * t2 * t1 * identity(2) + t1 * t1 * t1 * isz()) * w;
  EXPECT_LT(frob_norm(flow_b2(jet) - expect), 1e-14);
}

TEST(FlowSolver, JunctionTermsOfConstantState) {
  SplineState s;
  for (int l = 1; l <= 3; ++l) {
    s.u_segments.push_back(sample([](double) { return identity(2); }, 16, l));
    s.v_segments.push_back(sample([](double) { return identity(2); }, 16, l));
  }
  const auto jt = junction_terms(s);
  ASSERT_EQ(jt.size(), 3u);
  EXPECT_TRUE(jt.back().terminal);
  for (const auto& j : jt) {
    EXPECT_LT(frob_norm(j.b2_left) + frob_norm(j.b2_right) + frob_norm(j.v_x) + frob_norm(j.rhs), 1e-12);
  }
}

TEST(FlowSolver, ConfigGuard) {
  FlowConfig c = flow_config(random_knots(1, 1), 0.5, 16, 0.0, 1.0, 1e-6);
  c.stability_factor = 0.4;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.effective_dt(), 0.4 / 65536.0);
  c.dt = 1e-3;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(FlowStepper{c}, Error);
  c.dt = 0.0;
  c.M = 8;
  EXPECT_THROW(c.validate(), Error);
  c.M = 16;
  c.sigma = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c.sigma = 1.0;
  c.z1_stop = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(FlowSolver, ZeroTimeGivesInitialSnapshotOnly) {
  const KnotData kd = random_knots(2, 2);
  const FlowConfig c = flow_config(kd, 0.5, 16, 0.01, 0.0, 1e-6);
  const FlowTrajectory tr = run(c, build_initial(kd, 16));
  ASSERT_EQ(tr.snapshots.size(), 1u);
  EXPECT_FALSE(tr.converged);
  EXPECT_EQ(tr.stop_reason, StopReason::MaxTime);
  EXPECT_EQ(tr.steps, 0);
  EXPECT_EQ(tr.snapshots[0].t, 0.0);
}

TEST(FlowSolver, BumpDecaysToConstant) {
  KnotData kd;
  kd.n = 2;
  kd.q = 1;
  kd.knots = {UnitaryPoint::identity_point(2), UnitaryPoint::identity_point(2)};
  kd.phi0_prime = ComplexMatrix::Zero(2, 2);
  const int m = 16;
  SplineState s;
  s.u_segments.push_back(sample([](double x) { return expm_skew(0.2 * x * x * (1.5 - x) * isx()); }, m));
  const ComplexMatrix end = s.u_segments[0].back();
  const ComplexMatrix y = logm(UnitaryPoint::trusted(end)).matrix();
  s.v_segments.push_back(sample([&](double x) { return expm_skew(x * y); }, m));
  FlowConfig c = flow_config(kd, 0.5, m, 0.05, 200.0, 1e-14);
  long steps = 0;
  bool strict = true;
  const FlowTrajectory tr = run(c, s, [&](const StepRecord& r) {
    ++steps;
    if (r.z1 > 1e-10 && !(r.energy_after < r.energy_before)) strict = false;
  });
  EXPECT_TRUE(strict);
  EXPECT_NE(tr.stop_reason, StopReason::Blowup);
  EXPECT_NE(tr.stop_reason, StopReason::EnergyViolation) << tr.message;
  EXPECT_LT(total_energy(tr.terminal_state, 0.5), 1e-8);
  for (const auto* group : {&tr.terminal_state.u_segments, &tr.terminal_state.v_segments})
    for (const auto& seg : *group)
      for (const auto& x : seg.samples) EXPECT_LT(frob_norm(x - identity(2)), 1e-6);
}

TEST(FlowSolver, CoincidentKnotsConvergeToConstant) {
  KnotData kd;
  kd.n = 2;
  kd.q = 1;
  const ComplexMatrix p = expm_skew(0.4 * isy());
  kd.knots = {UnitaryPoint(p), UnitaryPoint(p)};
  kd.phi0_prime = ComplexMatrix::Zero(2, 2);
  const FlowConfig c = flow_config(kd, 0.5, 16, 0.05, 10.0, 1e-10);
  const FlowTrajectory tr = run(c, build_initial(kd, 16));
  EXPECT_TRUE(tr.converged);
  EXPECT_EQ(tr.stop_reason, StopReason::Stationary);
  for (const auto& x : tr.terminal_state.u_segments[0].samples) EXPECT_LT(frob_norm(x - p), 1e-6);
}

TEST(FlowSolver, TrajectoryInvariants) {
  const KnotData kd = random_knots(3, 2);
  FlowConfig c = flow_config(kd, 0.3, 16, 0.02, 2.0, 1e-12);
  c.snapshot_every = 10;
  const SplineState s0 = build_initial(kd, 16);
  const double f0 = total_energy(s0, c.sigma);
  bool dissipative = true, bounded = true;
  const FlowTrajectory tr = run(c, s0, [&](const StepRecord& r) {
    if (r.energy_after > r.energy_before + r.slack) dissipative = false;
    if (!apriori_bounds(*r.state, c.sigma, f0).ok()) bounded = false;
  });
  EXPECT_TRUE(dissipative);
  EXPECT_TRUE(bounded);
  EXPECT_EQ(tr.stop_reason, StopReason::MaxTime) << tr.message;
  EXPECT_EQ(tr.steps, 100);
  EXPECT_NEAR(tr.terminal_state.t, 2.0, 1e-12);
  ASSERT_GE(tr.snapshots.size(), 2u);
  for (std::size_t k = 1; k < tr.snapshots.size(); ++k) EXPECT_GT(tr.snapshots[k].t, tr.snapshots[k - 1].t);
  for (const auto& sn : tr.snapshots) {
    EXPECT_TRUE(std::isfinite(sn.diagnostics.total_energy));
    EXPECT_LT(sn.diagnostics.unitarity_drift, 1e-10);
    for (const auto& seg : sn.state.u_segments)
      for (const auto& x : seg.samples) EXPECT_NEAR(frob_norm(x), std::sqrt(2.0), 1e-10);
  }
  // Positional rows are exact; the rows with lagged terms are O(dt) off
  // until the flow settles.
  const FlowTrajectory half = run(flow_config(kd, 0.3, 16, 0.01, 2.0, 1e-12), s0);
  for (const auto& [name, v] : tr.snapshots.back().diagnostics.bc_residuals) {
    const double w = half.snapshots.back().diagnostics.bc_residuals.at(name);
    if (v < 1e-10) continue;
    EXPECT_LT(v, 1e-2) << name;
    EXPECT_GE(observed_order(v, w), 0.9) << name;
  }
}

TEST(FlowSolver, ClampedEndpointIsEnforced) {
  KnotData kd = random_knots(4, 2);
  kd.endpoint_mode = EndpointMode::ClampedVelocity;
  kd.phiq_prime = 0.3 * isz() * kd.knot(2);
  auto endpoint = [&](double dt) {
    const FlowTrajectory tr = run(flow_config(kd, 0.3, 16, dt, 0.4, 1e-12), build_initial(kd, 16));
    EXPECT_EQ(tr.stop_reason, StopReason::MaxTime) << tr.message;
    return tr.snapshots.back().diagnostics.bc_residuals.at("endpoint");
  };
  const double e1 = endpoint(0.02), e2 = endpoint(0.01);
  EXPECT_LT(e1, 1e-3);
  EXPECT_GE(observed_order(e1, e2), 0.9);
}

TEST(FlowSolver, RightTranslationEquivariance) {
  std::mt19937_64 rng(5);
  const ComplexMatrix w = random_unitary(rng, 2);
  KnotData kd = random_knots(6, 2);
  kd.endpoint_mode = EndpointMode::ClampedVelocity;
  kd.phiq_prime = 0.2 * isx() * kd.knot(2);
  KnotData moved = kd;
  for (auto& p : moved.knots) p = UnitaryPoint::trusted(p.matrix() * w);
  moved.phi0_prime = kd.phi0_prime * w;
  moved.phiq_prime = *kd.phiq_prime * w;
  const SplineState s0 = build_initial(kd, 16);
  const FlowTrajectory a = run(flow_config(kd, 0.3, 16, 0.02, 0.4, 1e-12), s0);
  const FlowTrajectory b = run(flow_config(moved, 0.3, 16, 0.02, 0.4, 1e-12), translated(s0, w));
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_LT(max_node_distance(translated(a.terminal_state, w), b.terminal_state), 1e-10);
}

TEST(FlowSolver, ThreadCountDoesNotChangeResults) {
  const KnotData kd = random_knots(7, 3);
  FlowConfig c = flow_config(kd, 0.3, 16, 0.02, 0.2, 1e-12);
  const SplineState s0 = build_initial(kd, 16);
  const FlowTrajectory one = run(c, s0);
  c.threads = 4;
  const FlowTrajectory four = run(c, s0);
  EXPECT_EQ(max_node_distance(one.terminal_state, four.terminal_state), 0.0);
}

TEST(FlowSolver, EquilibriumIsNearlyFixed) {
  const std::vector<double> th = {0.0, 0.6};
  const KnotData kd = commutative_knots(th, 0.4, EndpointMode::NaturalSecondDerivative);
  const FlowConfig c = flow_config(kd, 0.5, 32, 0.05, 1.0, 1e-12);
  const SplineState s = embed_commutative(commutative_reference(th, 0.4, 0.5, 32, kd.endpoint_mode));
  const SplineState next = step(s, c);
  EXPECT_LT(z1_speed(s, next, c.dt, c.sigma), 1e-5);
}

TEST(FlowSolver, NonFiniteStateStopsWithBlowup) {
  const KnotData kd = random_knots(8, 1);
  SplineState s = build_initial(kd, 16);
  s.u_segments[0].samples[5](0, 0) = std::numeric_limits<double>::quiet_NaN();
  const FlowTrajectory tr = run(flow_config(kd, 0.5, 16, 0.01, 1.0, 1e-9), s);
  EXPECT_EQ(tr.stop_reason, StopReason::Blowup);
  EXPECT_FALSE(tr.converged);
  EXPECT_FALSE(tr.message.empty());
}

TEST(FlowSolver, DissipationSlack) {
  EXPECT_NEAR(dissipation_slack(0.1, 2.0, 0.5), 0.5, 2e-12);
  EXPECT_DOUBLE_EQ(dissipation_slack(0.1, 0.0, 0.5, 3.0), 3e-12);
}

}  // namespace
