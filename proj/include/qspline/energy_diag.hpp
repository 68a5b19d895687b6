#pragma once

// Energies, residuals and stationarity diagnostics for spline states.

#include "qspline/extrinsic.hpp"

#include <map>
#include <string>

namespace qspline {

/// Trapezoid quadrature of f(j) over the nodes of one segment.
template <typename F>
double trapezoid(int m, double h, F&& f) {
  double s = 0.0;
  for (int j = 0; j <= m; ++j) s += ((j == 0 || j == m) ? 0.5 * h : h) * f(j);
  return s;
}

inline double squared(const ComplexMatrix& a) {
  const double n = frob_norm(a);
  return n * n;
}

/// 1/2 int |D_x U_x|^2 for one segment.
inline double bending_energy(const SegmentCurve& u) {
  const MatrixArray a = covariant_derivative(u, 1);
  return trapezoid(u.intervals(), u.h(), [&](int j) { return 0.5 * squared(a[static_cast<std::size_t>(j)]); });
}

inline double bending_energy(const SplineState& s) {
  double e = 0.0;
  for (const auto& u : s.u_segments) e += bending_energy(u);
  return e;
}

/// 1/2 int |d_x V|^2.
inline double tension_energy(const SegmentCurve& v) {
  const MatrixArray vx = fd_derivative(v, 1);
  return trapezoid(v.intervals(), v.h(), [&](int j) { return 0.5 * squared(vx[static_cast<std::size_t>(j)]); });
}

inline double tension_energy(const SplineState& s) {
  double e = 0.0;
  for (const auto& v : s.v_segments) e += tension_energy(v);
  return e;
}

inline void require_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error("sigma must be positive and finite");
}

/// F_sigma = bending + (1/sigma^2) sum_l T(V_l).
inline double total_energy(const SplineState& s, double sigma) {
  require_sigma(sigma);
  return bending_energy(s) + tension_energy(s) / (sigma * sigma);
}

/// Nodes treated as interior by the residual diagnostics: every stencil that
/// feeds H_xxx is central there.
inline constexpr int kResidualMargin = 3;

struct CubicResidual {
  double sup = 0.0;
  double l2 = 0.0;
  // Same quantity through D_x^3 U_x + R(D_xU_x, U_x)U_x, one node further in:
  // the nested differences there are only central from node 4 on.
  double intrinsic_sup = 0.0;
  double max_disagreement = 0.0;
};

/// -i H_xxx + [H, H_xx] on interior nodes, with the intrinsic form as a
/// cross-check.
inline CubicResidual cubic_residual(const SegmentCurve& u) {
  if (u.intervals() < 12) throw Error("cubic_residual: need at least 12 grid intervals");
  const int m = u.intervals();
  const double h = u.h();
  const MatrixArray hs = hamiltonian_track(u);
  const MatrixArray hxx = fd_derivative(hs, h, 2);
  const MatrixArray hxxx = fd_derivative(hs, h, 3);
  const MatrixArray t0 = covariant_derivative(u, 0);
  const MatrixArray t1 = covariant_derivative(u, 1);
  const MatrixArray t3 = covariant_derivative(u, 3);
  const cplx I{0.0, 1.0};
  CubicResidual r;
  double acc = 0.0;
  for (int j = kResidualMargin; j <= m - kResidualMargin; ++j) {
    const auto k = static_cast<std::size_t>(j);
    const ComplexMatrix ext = -I * hxxx[k] + bracket(hs[k], hxx[k]);
    const double e = frob_norm(ext);
    r.sup = std::max(r.sup, e);
    if (j > kResidualMargin && j < m - kResidualMargin) {
      const ComplexMatrix& uj = u.samples[k];
      const ComplexMatrix x = t1[k] * uj.adjoint();
      const ComplexMatrix y = t0[k] * uj.adjoint();
      const ComplexMatrix intr = t3[k] * uj.adjoint() + curvature(x, y, y);
      r.intrinsic_sup = std::max(r.intrinsic_sup, frob_norm(intr));
      r.max_disagreement = std::max(r.max_disagreement, frob_norm(ext - intr));
    }
    const double w = (j == kResidualMargin || j == m - kResidualMargin) ? 0.5 * h : h;
    acc += w * e * e;
  }
  r.l2 = std::sqrt(acc);
  return r;
}

/// sup over interior nodes of |P(d_x^2 V)| = |D_x V_x|.
inline double geodesic_residual(const SegmentCurve& v) {
  require_grid(v.samples.size(), "geodesic_residual");
  double r = 0.0;
  for (int j = 1; j < v.intervals(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    r = std::max(r, frob_norm(project_tangent(fd_at(v.view(), v.h(), 2, j), v.samples[k])));
  }
  return r;
}

/// Tangent part of an ambient row residual at the reference point `at`.
inline double tangent_residual(const ComplexMatrix& row, const ComplexMatrix& at) {
  return frob_norm(project_tangent(row, at));
}

/// One residual per boundary/junction condition. Positional conditions are
/// Frobenius distances; derivative conditions are the tangent parts of the
/// discrete rows the stepper enforces.
inline std::map<std::string, double> boundary_residuals(const SplineState& s, const KnotData& kd,
                                                        double sigma) {
  require_sigma(sigma);
  const int q = s.q();
  const int m = s.intervals();
  const double h = s.h();
  const double inv_s2 = 1.0 / (sigma * sigma);
  std::map<std::string, double> r;
  const auto& u1 = s.u_segments.front();
  r["clamp_position"] = frob_norm(u1.front() - kd.knot(0));
  r["clamp_velocity"] = tangent_residual(fd_at(u1.view(), h, 1, 0) - kd.phi0_prime, u1.front());
  for (int l = 1; l <= q; ++l) {
    const auto& ul = s.u_segments[static_cast<std::size_t>(l - 1)];
    const auto& vl = s.v_segments[static_cast<std::size_t>(l - 1)];
    const std::string tag = std::to_string(l);
    r["knot_" + tag] = frob_norm(vl.front() - kd.knot(l));
    r["leg_junction_" + tag] = frob_norm(vl.back() - ul.back());
    const NodeJet a = jet_at(ul, m);
    const ComplexMatrix vx = fd_at(vl.view(), h, 1, m);
    if (l < q) {
      const auto& un = s.u_segments[static_cast<std::size_t>(l)];
      const NodeJet b = jet_at(un, 0);
      r["continuity_" + tag] = frob_norm(ul.back() - un.front());
      r["jump_velocity_" + tag] = tangent_residual(b.w1 - a.w1, a.w);
      r["jump_acceleration_" + tag] = tangent_residual(b.w2 - a.w2, a.w);
      const ComplexMatrix flux = (b.w3 + flow_b2(b)) - (a.w3 + flow_b2(a)) + inv_s2 * vx;
      r["flux_" + tag] = tangent_residual(flux, a.w);
    } else {
      if (kd.endpoint_mode == EndpointMode::NaturalSecondDerivative) {
        r["endpoint"] = tangent_residual(a.w2 + flow_b1(a), a.w);
      } else {
        r["endpoint"] = tangent_residual(a.w1 - kd.end_velocity(a.w), a.w);
      }
      r["terminal_flux"] = tangent_residual(-(a.w3 + flow_b2(a)) + inv_s2 * vx, a.w);
    }
  }
  return r;
}

inline double max_value(const std::map<std::string, double>& m) {
  double v = 0.0;
  for (const auto& [k, x] : m) v = std::max(v, x);
  return v;
}

inline void require_same_grid(const SplineState& a, const SplineState& b) {
  if (a.q() != b.q() || a.intervals() != b.intervals() || a.dim() != b.dim()) {
    throw Error("states live on different grids");
  }
}

/// sum_l |dU_l/dt|^2_{L2} + (1/sigma^2) sum_l |dV_l/dt|^2_{L2} from two states.
inline double z1_speed(const SplineState& prev, const SplineState& next, double dt, double sigma) {
  require_same_grid(prev, next);
  require_sigma(sigma);
  if (!(dt > 0.0)) throw Error("z1_speed: dt must be positive");
  const int m = prev.intervals();
  const double h = prev.h();
  auto leg = [&](const std::vector<SegmentCurve>& a, const std::vector<SegmentCurve>& b) {
    double s = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
      s += trapezoid(m, h, [&](int j) {
        const auto k = static_cast<std::size_t>(j);
        return squared((b[l].samples[k] - a[l].samples[k]) / dt);
      });
    }
    return s;
  };
  return leg(prev.u_segments, next.u_segments) + leg(prev.v_segments, next.v_segments) / (sigma * sigma);
}

/// |U(x_l) - p_l| per knot l = 1..q (chordal fit error).
inline std::vector<double> fit_errors(const SplineState& s, const KnotData& kd) {
  std::vector<double> e;
  for (int l = 1; l <= s.q(); ++l) e.push_back(frob_norm(s.junction(l) - kd.knot(l)));
  return e;
}

/// Energy-derived bounds: sqrt(sum_l |D_xU_{l,x}|^2) <= sqrt(2 F_sigma(0)) and
/// (1/sigma^2) sum_l |V_{l,x}|^2 <= 2 F_sigma(0), both in L2 over each segment.
struct AprioriBounds {
  double bending_l2 = 0.0;
  double bending_bound = 0.0;
  double bending_sum_of_norms = 0.0;  // sum_l |D_xU_{l,x}|, reported only
  double tension = 0.0;
  double tension_bound = 0.0;
  bool ok() const { return bending_l2 <= bending_bound && tension <= tension_bound; }
};

inline AprioriBounds apriori_bounds(const SplineState& s, double sigma, double initial_energy) {
  AprioriBounds b;
  double sq = 0.0;
  for (const auto& u : s.u_segments) {
    const double e = 2.0 * bending_energy(u);
    sq += e;
    b.bending_sum_of_norms += std::sqrt(e);
  }
  b.bending_l2 = std::sqrt(sq);
  b.bending_bound = std::sqrt(2.0 * initial_energy);
  b.tension = 2.0 * tension_energy(s) / (sigma * sigma);
  b.tension_bound = 2.0 * initial_energy;
  return b;
}

struct DiagnosticsReport {
  double t = 0.0;
  double bending_energy = 0.0;
  double tension_energy = 0.0;  // sum_l T(V_l), without the 1/sigma^2 weight
  double total_energy = 0.0;
  double cubic_residual_sup = 0.0;
  double cubic_residual_l2 = 0.0;
  double geodesic_residual_sup = 0.0;
  std::map<std::string, double> bc_residuals;
  double unitarity_drift = 0.0;
  double z1_speed = 0.0;
  std::vector<double> fit_error;
};

inline DiagnosticsReport make_report(const SplineState& s, const KnotData& kd, double sigma,
                                     double z1) {
  DiagnosticsReport r;
  r.t = s.t;
  r.bending_energy = bending_energy(s);
  r.tension_energy = tension_energy(s);
  r.total_energy = r.bending_energy + r.tension_energy / (sigma * sigma);
  double l2sq = 0.0;
  for (const auto& u : s.u_segments) {
    if (u.intervals() < 12) break;
    const CubicResidual c = cubic_residual(u);
    r.cubic_residual_sup = std::max(r.cubic_residual_sup, c.sup);
    l2sq += c.l2 * c.l2;
  }
  r.cubic_residual_l2 = std::sqrt(l2sq);
  for (const auto& v : s.v_segments) r.geodesic_residual_sup = std::max(r.geodesic_residual_sup, geodesic_residual(v));
  r.bc_residuals = boundary_residuals(s, kd, sigma);
  r.unitarity_drift = s.unitarity_drift();
  r.z1_speed = z1;
  r.fit_error = fit_errors(s, kd);
  return r;
}

}  // namespace qspline
