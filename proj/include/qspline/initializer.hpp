#pragma once

// Admissible initial data and the order-0 compatibility report.

#include "qspline/energy_diag.hpp"

#include <Eigen/LU>

#include <functional>

namespace qspline {

namespace detail {

// beta rises 0 -> 1 with vanishing first and second derivatives at both ends.
inline double blend_beta(double s) { return s * s * s * (10.0 + s * (-15.0 + 6.0 * s)); }
// gamma has gamma(0) = gamma(1) = 0, gamma'(0) = 1 and vanishing first and
// second derivatives at s = 1, second derivative zero at s = 0.
inline double blend_gamma(double s) { return s * (1.0 + s * s * (-6.0 + s * (8.0 - 3.0 * s))); }

}  // namespace detail

/// Tangent coordinates of z at u in an orthonormal su(N) basis.
inline Eigen::VectorXd tangent_coords(const ComplexMatrix& z, const ComplexMatrix& u,
                                      const std::vector<ComplexMatrix>& basis) {
  const ComplexMatrix a = z * u.adjoint();
  Eigen::VectorXd c(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) c[static_cast<Eigen::Index>(i)] = inner(a, basis[i]).real();
  return c;
}

namespace detail {

struct ClosureRow {
  int free_segment;  // 1-based U segment of the free node
  int free_node;
  std::function<ComplexMatrix(const SplineState&)> value;  // ambient residual
  std::function<const ComplexMatrix&(const SplineState&)> at;
};

// Newton iteration that moves one node per row so that the tangent parts of
// the sigma-free boundary rows vanish. Nodes shared with knots, junctions or
// legs stay fixed.
inline void close_boundary_rows(SplineState& s, const KnotData& kd) {
  const int q = s.q();
  const int m = s.intervals();
  const double h = s.h();
  const auto basis = su_basis(kd.n);
  const int k = static_cast<int>(basis.size());
  if (k == 0) return;
  auto U = [](const SplineState& st, int l) -> const SegmentCurve& {
    return st.u_segments[static_cast<std::size_t>(l - 1)];
  };
  std::vector<ClosureRow> rows;
  rows.push_back({1, 1, [&](const SplineState& st) { return ComplexMatrix(fd_at(U(st, 1).view(), h, 1, 0) - kd.phi0_prime); },
                  [&](const SplineState& st) -> const ComplexMatrix& { return U(st, 1).front(); }});
  for (int l = 1; l < q; ++l) {
    auto at = [&, l](const SplineState& st) -> const ComplexMatrix& { return U(st, l).back(); };
    for (int order = 1; order <= 2; ++order) {
      rows.push_back({order == 1 ? l : l + 1, order == 1 ? m - 1 : 1,
                      [&, l, order](const SplineState& st) {
                        return ComplexMatrix(fd_at(U(st, l + 1).view(), h, order, 0) - fd_at(U(st, l).view(), h, order, m));
                      },
                      at});
    }
  }
  rows.push_back({q, m - 1,
                  [&](const SplineState& st) {
                    const NodeJet a = jet_at(U(st, q), m, 2);
                    if (kd.endpoint_mode == EndpointMode::NaturalSecondDerivative) return ComplexMatrix(a.w2 + flow_b1(a));
                    return ComplexMatrix(a.w1 - kd.end_velocity(a.w));
                  },
                  [&](const SplineState& st) -> const ComplexMatrix& { return U(st, q).back(); }});

  const int n = static_cast<int>(rows.size()) * k;
  auto residual = [&](const SplineState& st) {
    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      r.segment(static_cast<Eigen::Index>(i) * k, k) = tangent_coords(rows[i].value(st), rows[i].at(st), basis);
    }
    return r;
  };
  auto move = [&](SplineState& st, const Eigen::VectorXd& d) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ComplexMatrix xi = ComplexMatrix::Zero(kd.n, kd.n);
      for (int a = 0; a < k; ++a) xi += d[static_cast<Eigen::Index>(i) * k + a] * basis[static_cast<std::size_t>(a)];
      auto& node = st.u_segments[static_cast<std::size_t>(rows[i].free_segment - 1)]
                       .samples[static_cast<std::size_t>(rows[i].free_node)];
      node = fix_determinant_phase(expm_skew(xi) * node);
    }
  };
  const double scale = 1.0 / (h * h);
  const double eps = 1e-6;
  for (int it = 0; it < 40; ++it) {
    const Eigen::VectorXd r = residual(s);
    if (r.lpNorm<Eigen::Infinity>() <= 1e-14 * scale) return;
    Eigen::MatrixXd jac(n, n);
    for (int c = 0; c < n; ++c) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
      d[c] = eps;
      SplineState plus = s, minus = s;
      move(plus, d);
      move(minus, -d);
      jac.col(c) = (residual(plus) - residual(minus)) / (2.0 * eps);
    }
    const Eigen::VectorXd step = Eigen::PartialPivLU<Eigen::MatrixXd>(jac).solve(-r);
    if (!step.allFinite()) throw Error("build_initial: boundary closure failed");
    move(s, step);
  }
  if (residual(s).lpNorm<Eigen::Infinity>() > 1e-10) throw Error("build_initial: boundary closure did not converge");
}

}  // namespace detail

/// Quintic-blended initial curve with geodesic fitting legs.
///
/// Segment l is p_{l-1} exp(g(s) Ys) exp(b(s) X_l) exp(-g(1-s) Ye) with
/// X_l = log(p_{l-1}^-1 p_l); Ys carries the clamp velocity on the first
/// segment and Ye the clamped end velocity on the last one. The nodes next to
/// each end are then nudged so that the discrete velocity, jump and endpoint
/// rows hold exactly.
inline SplineState build_initial(const KnotData& kd, int m) {
  kd.validate();
  if (m < 16) throw Error("build_initial: M must be >= 16, got " + std::to_string(m));
  const int q = kd.q;
  const int n = kd.n;
  SplineState s;
  for (int l = 1; l <= q; ++l) {
    const ComplexMatrix& a = kd.knot(l - 1);
    const ComplexMatrix x = logm(UnitaryPoint::trusted(a.adjoint() * kd.knot(l))).matrix();
    const ComplexMatrix ys = (l == 1) ? ComplexMatrix(skew0(a.adjoint() * kd.phi0_prime)) : ComplexMatrix::Zero(n, n);
    ComplexMatrix ye = ComplexMatrix::Zero(n, n);
    if (l == q && kd.endpoint_mode == EndpointMode::ClampedVelocity) {
      ye = skew0(kd.knot(q).adjoint() * *kd.phiq_prime);
    }
    MatrixArray u;
    for (int j = 0; j <= m; ++j) {
      const double t = static_cast<double>(j) / m;
      ComplexMatrix w = a * expm_skew(detail::blend_gamma(t) * ys) * expm_skew(detail::blend_beta(t) * x) *
                        expm_skew(-detail::blend_gamma(1.0 - t) * ye);
      u.push_back(j == 0 ? a : (j == m ? kd.knot(l) : fix_determinant_phase(w)));
    }
    s.u_segments.emplace_back(l, std::move(u));
  }
  if (m >= kMinStencilIntervals) detail::close_boundary_rows(s, kd);
  for (int l = 1; l <= q; ++l) {
    const ComplexMatrix& p = kd.knot(l);
    const ComplexMatrix& end = s.junction(l);
    const ComplexMatrix y = logm(UnitaryPoint::trusted(p.adjoint() * end)).matrix();
    MatrixArray v;
    for (int j = 0; j <= m; ++j) {
      if (j == 0) v.push_back(p);
      else if (j == m) v.push_back(end);
      else v.push_back(fix_determinant_phase(p * expm_skew((static_cast<double>(j) / m) * y)));
    }
    s.v_segments.emplace_back(l, std::move(v));
  }
  return s;
}

struct CompatibilityReport {
  std::map<std::string, double> residuals;
  std::map<std::string, double> tolerances;
  double max_residual = 0.0;
  bool pass = true;
};

inline constexpr double kCompatPositionTol = 1e-6;
inline constexpr double kCompatHigherTol = 1e-2;

/// L^4(U) = -D^3 U_x - R(D_xU_x, U_x)U_x at node j, through the extrinsic form.
inline ComplexMatrix l4_operator(const SegmentCurve& u, int j) {
  const NodeJet jet = jet_at(u, j);
  return project_tangent(-fd_at(u.view(), u.h(), 4, j) + flow_g(jet), jet.w);
}

/// Order-0 compatibility rows with two tolerance tiers: positional, velocity
/// and second-order matching rows must hold to 1e-6, the fourth-order and flux
/// rows to 1e-2.
inline CompatibilityReport check_compatibility(const SplineState& s, const KnotData& kd, double sigma) {
  require_sigma(sigma);
  s.validate_shape();
  const int q = s.q();
  const int m = s.intervals();
  const double h = s.h();
  const double s2 = sigma * sigma;
  CompatibilityReport rep;
  auto put = [&](const std::string& name, double v, double tol) {
    rep.residuals[name] = v;
    rep.tolerances[name] = tol;
    rep.max_residual = std::max(rep.max_residual, v);
    if (!(v <= tol)) rep.pass = false;
  };
  const auto bc = boundary_residuals(s, kd, sigma);
  for (const auto& [name, v] : bc) {
    const bool higher = name.rfind("flux_", 0) == 0 || name == "terminal_flux";
    put(name, v, higher ? kCompatHigherTol : kCompatPositionTol);
  }
  put("L4_start", frob_norm(l4_operator(s.u_segments.front(), 0)), kCompatHigherTol);
  for (int l = 1; l <= q; ++l) {
    const auto& ul = s.u_segments[static_cast<std::size_t>(l - 1)];
    const auto& vl = s.v_segments[static_cast<std::size_t>(l - 1)];
    const std::string tag = std::to_string(l);
    const ComplexMatrix dv = project_tangent(fd_at(vl.view(), h, 2, m), vl.back());
    put("leg_acceleration_" + tag, frob_norm(dv), kCompatHigherTol);
    put("L4_left_" + tag, frob_norm(l4_operator(ul, m) - s2 * dv), kCompatHigherTol);
    if (l < q) {
      put("L4_right_" + tag, frob_norm(l4_operator(s.u_segments[static_cast<std::size_t>(l)], 0) - s2 * dv),
          kCompatHigherTol);
    }
  }
  return rep;
}

}  // namespace qspline
