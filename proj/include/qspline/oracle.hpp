#pragma once

// Independent references: the scalar smoothing-spline problem of the diagonal
// subgroup, and a finite-difference check of the flow field against the
// discrete energy.

#include "qspline/energy_diag.hpp"

#include <Eigen/LU>

#include <random>

namespace qspline {

struct CommutativeSolution {
  std::vector<std::vector<double>> u_phases;  // per segment, M + 1 nodes
  std::vector<std::vector<double>> v_phases;
  std::vector<Eigen::Vector4d> u_coeffs;  // c0 + c1 s + c2 s^2 + c3 s^3, s = x - x_{l-1}
  std::vector<Eigen::Vector2d> v_coeffs;  // d0 + d1 s
};

/// Scalar stationary system: cubic u_l and affine v_l per segment, clamp at
/// x_0, C^2 junctions, third-derivative jump balanced by the leg slope,
/// v_l(x_{l-1}) = theta_l, v_l(x_l) = u(x_l), and the chosen end condition.
inline CommutativeSolution commutative_reference(const std::vector<double>& theta, double theta0_prime,
                                                 double sigma, int m, EndpointMode mode,
                                                 double thetaq_prime = 0.0) {
  require_sigma(sigma);
  if (theta.size() < 2) throw Error("commutative_reference: need at least two phases");
  if (m < 1) throw Error("commutative_reference: M must be positive");
  const int q = static_cast<int>(theta.size()) - 1;
  const int n = 6 * q;
  const double w = 1.0 / (sigma * sigma);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  auto uc = [](int l) { return 6 * (l - 1); };      // u_l coefficient base
  auto vc = [](int l) { return 6 * (l - 1) + 4; };  // v_l coefficient base
  // k-th derivative of a cubic at s = 0 or 1, as coefficient weights.
  auto du = [](int k, double s) {
    Eigen::Vector4d r;
    for (int i = 0; i < 4; ++i) {
      double f = 1.0;
      for (int t = 0; t < k; ++t) f *= (i - t);
      r[i] = (i < k) ? 0.0 : f * std::pow(s, i - k);
    }
    return r;
  };
  int row = 0;
  auto put_u = [&](int l, int k, double s, double c) { a.block(row, uc(l), 1, 4) += c * du(k, s).transpose(); };
  put_u(1, 0, 0.0, 1.0);
  b[row++] = theta[0];
  put_u(1, 1, 0.0, 1.0);
  b[row++] = theta0_prime;
  for (int l = 1; l <= q; ++l) {
    a(row, vc(l)) = 1.0;
    b[row++] = theta[static_cast<std::size_t>(l)];
    a(row, vc(l)) = 1.0;
    a(row, vc(l) + 1) = 1.0;
    put_u(l, 0, 1.0, -1.0);
    ++row;
    if (l < q) {
      for (int k = 0; k <= 2; ++k) {
        put_u(l + 1, k, 0.0, 1.0);
        put_u(l, k, 1.0, -1.0);
        ++row;
      }
      put_u(l + 1, 3, 0.0, 1.0);
      put_u(l, 3, 1.0, -1.0);
      a(row, vc(l) + 1) = w;
      ++row;
    } else {
      if (mode == EndpointMode::NaturalSecondDerivative) {
        put_u(q, 2, 1.0, 1.0);
      } else {
        put_u(q, 1, 1.0, 1.0);
        b[row] = thetaq_prime;
      }
      ++row;
      put_u(q, 3, 1.0, -1.0);
      a(row, vc(q) + 1) = w;
      ++row;
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw Error("commutative_reference: singular system");
  const Eigen::VectorXd c = lu.solve(b);
  CommutativeSolution sol;
  for (int l = 1; l <= q; ++l) {
    const Eigen::Vector4d cu = c.segment<4>(uc(l));
    const Eigen::Vector2d cv = c.segment<2>(vc(l));
    sol.u_coeffs.push_back(cu);
    sol.v_coeffs.push_back(cv);
    std::vector<double> up, vp;
    for (int j = 0; j <= m; ++j) {
      const double s = static_cast<double>(j) / m;
      up.push_back(cu[0] + s * (cu[1] + s * (cu[2] + s * cu[3])));
      vp.push_back(cv[0] + s * cv[1]);
    }
    sol.u_phases.push_back(std::move(up));
    sol.v_phases.push_back(std::move(vp));
  }
  return sol;
}

/// diag(e^{i theta}, e^{-i theta}) = expm(i theta sigma_z).
inline ComplexMatrix phase_embed(double theta) {
  ComplexMatrix u = ComplexMatrix::Zero(2, 2);
  u(0, 0) = std::polar(1.0, theta);
  u(1, 1) = std::polar(1.0, -theta);
  return u;
}

/// Phase theta of a diagonal SU(2) element, continued from `near`.
inline double phase_of(const ComplexMatrix& u, double near = 0.0) {
  const double raw = std::arg(u(0, 0));
  const double two_pi = 2.0 * std::acos(-1.0);
  return raw + two_pi * std::round((near - raw) / two_pi);
}

inline SplineState embed_commutative(const CommutativeSolution& sol) {
  SplineState s;
  for (std::size_t l = 0; l < sol.u_phases.size(); ++l) {
    MatrixArray u, v;
    for (double t : sol.u_phases[l]) u.push_back(phase_embed(t));
    for (double t : sol.v_phases[l]) v.push_back(phase_embed(t));
    s.u_segments.emplace_back(static_cast<int>(l) + 1, std::move(u));
    s.v_segments.emplace_back(static_cast<int>(l) + 1, std::move(v));
  }
  return s;
}

/// Knot data of the diagonal problem with phases theta_l.
inline KnotData commutative_knots(const std::vector<double>& theta, double theta0_prime, EndpointMode mode,
                                  double thetaq_prime = 0.0) {
  KnotData kd;
  kd.n = 2;
  kd.q = static_cast<int>(theta.size()) - 1;
  for (double t : theta) kd.knots.push_back(UnitaryPoint(phase_embed(t)));
  const ComplexMatrix iz = cplx{0.0, 1.0} * pauli_z();
  kd.phi0_prime = theta0_prime * iz * kd.knot(0);
  kd.endpoint_mode = mode;
  if (mode == EndpointMode::ClampedVelocity) kd.phiq_prime = thetaq_prime * iz * kd.knot(kd.q);
  return kd;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::vector<double> finite_difference;  // per probe
  std::vector<double> predicted;
};

/// Tangent probe fields: smooth profiles times random su(N) directions on U,
/// vanishing to second order at x_0; each leg carries a field that vanishes
/// at its knot and matches the U field at the junction.
inline std::vector<SplineState> make_probes(const SplineState& s, int n_probes, std::uint64_t seed) {
  const int q = s.q();
  const int m = s.intervals();
  const auto basis = su_basis(s.dim());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double pi = std::acos(-1.0);
  std::vector<SplineState> out;
  for (int p = 0; p < n_probes; ++p) {
    std::vector<std::array<double, 3>> cu(basis.size());
    for (auto& c : cu)
      for (double& x : c) x = gauss(rng);
    auto xi_at = [&](double x) {
      ComplexMatrix xi = ComplexMatrix::Zero(s.dim(), s.dim());
      for (std::size_t a = 0; a < basis.size(); ++a) {
        double f = 0.0;
        for (int k = 0; k < 3; ++k) f += cu[a][static_cast<std::size_t>(k)] * std::cos((k + 1) * pi * x / (q + 1.0));
        xi += x * x * f * basis[a];
      }
      return xi;
    };
    SplineState w;
    for (int l = 1; l <= q; ++l) {
      const auto& ul = s.u_segments[static_cast<std::size_t>(l - 1)];
      const auto& vl = s.v_segments[static_cast<std::size_t>(l - 1)];
      MatrixArray wu, wv;
      for (int j = 0; j <= m; ++j) wu.push_back(xi_at(ul.x(j)) * ul.samples[static_cast<std::size_t>(j)]);
      ComplexMatrix bump = ComplexMatrix::Zero(s.dim(), s.dim());
      for (const auto& e : basis) bump += gauss(rng) * e;
      const ComplexMatrix end = xi_at(static_cast<double>(l));
      for (int j = 0; j <= m; ++j) {
        const double t = static_cast<double>(j) / m;
        wv.push_back((t * end + 4.0 * t * (1.0 - t) * bump) * vl.samples[static_cast<std::size_t>(j)]);
      }
      w.u_segments.emplace_back(l, std::move(wu));
      w.v_segments.emplace_back(l, std::move(wv));
    }
    out.push_back(std::move(w));
  }
  return out;
}

namespace detail {

/// Weights of a one-sided k-th derivative at node 0 from nodes 0..n-1 (unit
/// spacing), exact on polynomials of degree n - 1.
inline Eigen::VectorXd one_sided_weights(int k, int n) {
  Eigen::MatrixXd a(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < n; ++p)
    for (int i = 0; i < n; ++i) a(p, i) = std::pow(static_cast<double>(i), p);
  double f = 1.0;
  for (int t = 2; t <= k; ++t) f *= t;
  b[k] = f;
  return a.fullPivLu().solve(b);
}

/// Fourth-order one-sided k-th derivative at segment end `end` (0 or M).
inline ComplexMatrix end_derivative(const SegmentCurve& c, int k, int end) {
  const int n = k + 4;
  if (c.intervals() < n) throw Error("end_derivative: grid too short");
  const Eigen::VectorXd w = one_sided_weights(k, n);
  const int dir = end == 0 ? 1 : -1;
  ComplexMatrix r = ComplexMatrix::Zero(c.dim(), c.dim());
  for (int i = 0; i < n; ++i) r += w[i] * c.samples[static_cast<std::size_t>(end + dir * i)];
  return r * (std::pow(static_cast<double>(dir), k) / std::pow(c.h(), k));
}

inline NodeJet end_jet(const SegmentCurve& c, int end) {
  NodeJet j;
  j.w = c.samples[static_cast<std::size_t>(end)];
  j.w1 = end_derivative(c, 1, end);
  j.w2 = end_derivative(c, 2, end);
  j.w3 = end_derivative(c, 3, end);
  return j;
}

}  // namespace detail

inline double real_inner(const ComplexMatrix& a, const ComplexMatrix& b) { return inner(a, b).real(); }

/// Directional derivative of F_sigma along w predicted by the flow field:
/// -<P rhs_U, W_U> - sigma^-4 <P rhs_V, W_V> plus the end and junction terms
/// [<D_xU_x, D_xW> - <D_x^2U_x, W>] and sigma^-2 [<V_x, W_V>]. End values use
/// their own fourth-order one-sided stencils.
inline double predicted_derivative(const SplineState& s, const SplineState& w, double sigma) {
  const int m = s.intervals();
  const double h = s.h();
  const double s2 = sigma * sigma;
  double d = 0.0;
  for (int l = 1; l <= s.q(); ++l) {
    const auto& u = s.u_segments[static_cast<std::size_t>(l - 1)];
    const auto& v = s.v_segments[static_cast<std::size_t>(l - 1)];
    const auto& wu = w.u_segments[static_cast<std::size_t>(l - 1)];
    const auto& wv = w.v_segments[static_cast<std::size_t>(l - 1)];
    const MatrixArray ru = rhs_U(u);
    const MatrixArray rv = rhs_V(v, sigma);
    d -= trapezoid(m, h, [&](int j) {
      const auto k = static_cast<std::size_t>(j);
      return real_inner(project_tangent(ru[k], u.samples[k]), wu.samples[k]);
    });
    d -= trapezoid(m, h, [&](int j) {
      const auto k = static_cast<std::size_t>(j);
      return real_inner(project_tangent(rv[k], v.samples[k]), wv.samples[k]);
    }) / (s2 * s2);
    for (int end : {0, m}) {
      const double sign = end == m ? 1.0 : -1.0;
      const NodeJet jet = detail::end_jet(u, end);
      const ComplexMatrix t2 = project_tangent(jet.w2 + flow_b1(jet), jet.w);
      const ComplexMatrix t3 = project_tangent(jet.w3 + flow_b2(jet), jet.w);
      const ComplexMatrix dw = project_tangent(detail::end_derivative(wu, 1, end), jet.w);
      const auto k = static_cast<std::size_t>(end);
      d += sign * (real_inner(t2, dw) - real_inner(t3, wu.samples[k]));
      const ComplexMatrix vx = detail::end_derivative(v, 1, end);
      d += sign * real_inner(vx, wv.samples[k]) / s2;
    }
  }
  return d;
}

inline SplineState perturb(const SplineState& s, const SplineState& w, double eps) {
  SplineState out = s;
  for (auto* pair : {&out.u_segments, &out.v_segments}) {
    const auto& src = (pair == &out.u_segments) ? w.u_segments : w.v_segments;
    for (std::size_t l = 0; l < pair->size(); ++l)
      for (std::size_t j = 0; j < (*pair)[l].samples.size(); ++j) {
        auto& x = (*pair)[l].samples[j];
        x = retract(x + eps * src[l].samples[j]).matrix();
      }
  }
  return out;
}

/// Central differences of F_sigma along random probes against the predicted
/// directional derivative. Relative error is taken against the larger of the
/// two magnitudes.
inline GradientCheck fd_gradient_check(const SplineState& s, double sigma, int n_probes, double eps,
                                       std::uint64_t seed = 7) {
  require_sigma(sigma);
  s.validate_shape();
  if (n_probes < 1) throw Error("fd_gradient_check: need at least one probe");
  if (!(eps > 0.0)) throw Error("fd_gradient_check: eps must be positive");
  GradientCheck g;
  for (const auto& w : make_probes(s, n_probes, seed)) {
    const double fd = (total_energy(perturb(s, w, eps), sigma) - total_energy(perturb(s, w, -eps), sigma)) / (2.0 * eps);
    const double pr = predicted_derivative(s, w, sigma);
    g.finite_difference.push_back(fd);
    g.predicted.push_back(pr);
    const double err = std::abs(fd - pr);
    g.max_absolute_error = std::max(g.max_absolute_error, err);
    g.max_relative_error = std::max(g.max_relative_error, err / std::max({std::abs(fd), std::abs(pr), 1e-300}));
  }
  return g;
}

}  // namespace qspline
