#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace qspline;
using namespace qspline::testing;

namespace {

MatrixArray scalar_samples(const std::function<double(double)>& f, int m) {
  MatrixArray out;
  for (int j = 0; j <= m; ++j) out.push_back(ComplexMatrix::Constant(1, 1, f(static_cast<double>(j) / m)));
  return out;
}

TEST(CurveGrid, StencilsAreExactOnPolynomials) {
  const int m = 16;
  const double h = 1.0 / m;
  for (int order = 1; order <= 4; ++order) {
    for (int deg = 0; deg <= order + 1; ++deg) {
      const MatrixArray f = scalar_samples([&](double x) { return std::pow(x, deg); }, m);
      const MatrixArray d = fd_derivative(f, h, order);
      for (int j = 0; j <= m; ++j) {
        const double x = static_cast<double>(j) / m;
        double exact = 0.0;
        if (deg >= order) {
          exact = 1.0;
          for (int t = 0; t < order; ++t) exact *= (deg - t);
          exact *= std::pow(x, deg - order);
        }
        EXPECT_NEAR(d[static_cast<std::size_t>(j)](0, 0).real(), exact, 1e-6)
            << "order " << order << " degree " << deg << " node " << j;
      }
    }
  }
}

TEST(CurveGrid, FourthDerivativeOfQuartic) {
  const MatrixArray f = scalar_samples([](double x) { return std::pow(x, 4); }, 16);
  for (const auto& v : fd_derivative(f, 1.0 / 16, 4)) EXPECT_NEAR(v(0, 0).real(), 24.0, 1e-6);
}

TEST(CurveGrid, ConstantCurveHasZeroDerivatives) {
  std::mt19937_64 rng(1);
  const ComplexMatrix u = random_unitary(rng, 2);
  const SegmentCurve c = sample([&](double) { return u; }, 16);
  for (int order = 1; order <= 4; ++order)
    for (const auto& d : fd_derivative(c, order)) EXPECT_LT(frob_norm(d), 1e-9);
}

TEST(CurveGrid, SecondDerivativeOfQuadratic) {
  const MatrixArray f = scalar_samples([](double x) { return x * x; }, 16);
  for (const auto& v : fd_derivative(f, 1.0 / 16, 2)) EXPECT_NEAR(v(0, 0).real(), 2.0, 1e-10);
}

TEST(CurveGrid, RejectsShortGrids) {
  const MatrixArray f = scalar_samples([](double x) { return x; }, 4);
  EXPECT_THROW(fd_derivative(f, 0.25, 1), Error);
}

TEST(CurveGrid, FdIsLinear) {
  std::mt19937_64 rng(2);
  const SegmentCurve a = sample(twisted, 16), b = sample([](double x) { return expm_skew(x * isz()); }, 16);
  const ComplexMatrix l = random_complex(rng, 2);
  MatrixArray comb;
  for (std::size_t j = 0; j < a.samples.size(); ++j) comb.push_back(l * (2.0 * a.samples[j] - b.samples[j]));
  const MatrixArray dc = fd_derivative(comb, a.h(), 3);
  const MatrixArray da = fd_derivative(a, 3), db = fd_derivative(b, 3);
  for (std::size_t j = 0; j < dc.size(); ++j) EXPECT_LT(frob_norm(dc[j] - l * (2.0 * da[j] - db[j])), 1e-8);
}

// Alternation loses one order at the end nodes, so orders are measured on the
// middle half of the grid.
double sup_over(const MatrixArray& a, const std::function<double(const ComplexMatrix&)>& f, bool interior = true) {
  const std::size_t m = a.size() - 1;
  double e = 0.0;
  for (std::size_t j = interior ? m / 4 : 0; j <= (interior ? 3 * m / 4 : m); ++j) e = std::max(e, f(a[j]));
  return e;
}

TEST(CurveGrid, GeodesicHasZeroAcceleration) {
  auto err = [](int m) {
    const SegmentCurve g = sample([](double x) { return expm_skew(x * isz()); }, m);
    return sup_over(covariant_derivative(g, 1), [](const ComplexMatrix& a) { return frob_norm(a); });
  };
  // A one-parameter subgroup is differenced exactly up to rounding inside.
  EXPECT_LT(err(32), 1e-10);
  EXPECT_LT(err(64), 1e-10);
}

TEST(CurveGrid, QuadraticPhaseAcceleration) {
  auto err = [](int m) {
    const SegmentCurve c = phase_curve([](double x) { return x * x; }, m);
    return sup_over(covariant_derivative(c, 1),
                    [](const ComplexMatrix& a) { return std::abs(frob_norm(a) - 2.0 * std::sqrt(2.0)); });
  };
  EXPECT_LT(err(64), 2e-2);
  EXPECT_GE(observed_order(err(32), err(64)), 1.8);
  const SegmentCurve c = phase_curve([](double x) { return x * x; }, 64);
  EXPECT_LT(sup_over(covariant_derivative(c, 1),
                     [](const ComplexMatrix& a) { return std::abs(frob_norm(a) - 2.0 * std::sqrt(2.0)); }, false),
            0.2);
}

TEST(CurveGrid, HamiltonianTrack) {
  const SegmentCurve g = sample([](double x) { return expm_skew(x * isz()); }, 32);
  for (const auto& h : hamiltonian_track(g)) EXPECT_LT(frob_norm(h + pauli_z()), 1e-2);
  const SegmentCurve c = sample([](double) { return identity(2); }, 16);
  for (const auto& h : hamiltonian_track(c)) EXPECT_LT(frob_norm(h), 1e-12);
  const SegmentCurve cubic = phase_curve([](double x) { return x * x * x; }, 64);
  const MatrixArray hs = hamiltonian_track(cubic);
  for (int j = 0; j <= 64; ++j) {
    const double x = j / 64.0;
    EXPECT_LT(frob_norm(hs[static_cast<std::size_t>(j)] + 3.0 * x * x * pauli_z()), 2e-3);
  }
}

// D_xU_x = -i H_x U, D_x^2 U_x = (-i H_xx - 1/2 [H_x, H]) U and
// D_x^3 U_x = (-i H_xxx + [H, H_xx] + 1/4 [[H_x, H], iH]) U at interior nodes.
double identity_error(int m, int k) {
  const SegmentCurve c = sample(twisted, m);
  const double h = c.h();
  const cplx I{0.0, 1.0};
  const MatrixArray hs = hamiltonian_track(c);
  const MatrixArray h1 = fd_derivative(hs, h, 1), h2 = fd_derivative(hs, h, 2), h3 = fd_derivative(hs, h, 3);
  const MatrixArray t = covariant_derivative(c, k);
  double err = 0.0;
  for (int j = m / 4; j <= 3 * m / 4; ++j) {
    const auto i = static_cast<std::size_t>(j);
    ComplexMatrix oracle;
    if (k == 1) oracle = -I * h1[i];
    if (k == 2) oracle = -I * h2[i] - 0.5 * bracket(h1[i], hs[i]);
    if (k == 3) oracle = -I * h3[i] + bracket(hs[i], h2[i]) + 0.25 * bracket(bracket(h1[i], hs[i]), I * hs[i]);
    err = std::max(err, frob_norm(t[i] - oracle * c.samples[i]));
  }
  return err;
}

TEST(CurveGrid, CovariantIdentityChainConverges) {
  for (int k = 1; k <= 3; ++k) {
    const double e32 = identity_error(32, k), e64 = identity_error(64, k), e128 = identity_error(128, k);
    EXPECT_GE(observed_order(e32, e64), 1.8) << "k = " << k;
    EXPECT_GE(observed_order(e64, e128), 1.8) << "k = " << k;
  }
}

TEST(CurveGrid, NormalPartOfSecondDerivative) {
  const int m = 64;
  const SegmentCurve c = sample(twisted, m);
  const MatrixArray d2 = fd_derivative(c, 2);
  const MatrixArray hs = hamiltonian_track(c);
  for (int j = 8; j <= m - 8; ++j) {
    const auto i = static_cast<std::size_t>(j);
    const ComplexMatrix normal = d2[i] - project_tangent(d2[i], c.samples[i]);
    EXPECT_LT(frob_norm(normal + hs[i] * hs[i] * c.samples[i]), 1e-2);
  }
}

TEST(CurveGrid, KnotDataValidation) {
  KnotData kd;
  kd.n = 2;
  kd.q = 1;
  kd.knots = {UnitaryPoint::identity_point(2), UnitaryPoint::identity_point(2)};
  kd.phi0_prime = isz();
  EXPECT_NO_THROW(kd.validate());
  kd.phi0_prime = pauli_z();
  EXPECT_THROW(kd.validate(), Error);
  kd.phi0_prime = isz();
  kd.endpoint_mode = EndpointMode::ClampedVelocity;
  EXPECT_THROW(kd.validate(), Error);
  kd.phiq_prime = isx();
  EXPECT_NO_THROW(kd.validate());
  kd.knots.pop_back();
  EXPECT_THROW(kd.validate(), Error);
}

TEST(CurveGrid, StateAdmissibility) {
  const SplineState s{{sample([](double) { return identity(2); }, 16)}, {sample([](double) { return identity(2); }, 16)}, 0.0};
  KnotData kd;
  kd.n = 2;
  kd.q = 1;
  kd.knots = {UnitaryPoint::identity_point(2), UnitaryPoint::identity_point(2)};
  kd.phi0_prime = ComplexMatrix::Zero(2, 2);
  EXPECT_NO_THROW(s.validate_shape());
  EXPECT_EQ(s.admissibility_defect(kd), 0.0);
  SplineState bad = s;
  bad.v_segments[0].samples.pop_back();
  EXPECT_THROW(bad.validate_shape(), Error);
}

}  // namespace
