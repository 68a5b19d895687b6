#pragma once

// Extrinsic (ambient) form of the spline flow: the nonlinear terms G, b1, b2
// written in terms of ambient derivatives of W : [a, b] -> SU(N) in M_N(C).
//
//   d_t U = -d_x^4 U + G(d^3U, d^2U, dU, U)     (curve segments)
//   d_t V = s^2 (d_x^2 V + b1(dV, V))          (fitting legs)
//   D_x U_x   = d_x^2 U + b1(dU, U)
//   D_x^2 U_x = d_x^3 U + b2(d^2U, dU, U)

#include "qspline/curve_grid.hpp"

namespace qspline {

/// Ambient derivatives of a segment at one node, orders 0..3.
struct NodeJet {
  ComplexMatrix w, w1, w2, w3;
};

inline NodeJet jet_at(const SegmentCurve& c, int j, int max_order = 3) {
  NodeJet jet;
  jet.w = c.samples[static_cast<std::size_t>(j)];
  const auto f = c.view();
  const double h = c.h();
  jet.w1 = fd_at(f, h, 1, j);
  if (max_order >= 2) jet.w2 = fd_at(f, h, 2, j);
  if (max_order >= 3) jet.w3 = fd_at(f, h, 3, j);
  return jet;
}

inline ComplexMatrix flow_g(const ComplexMatrix& w3, const ComplexMatrix& w2,
                            const ComplexMatrix& w1, const ComplexMatrix& w) {
  const ComplexMatrix s = w.adjoint();
  const ComplexMatrix a = w1 * s;  // dW W^*
  const ComplexMatrix sw1 = s * w1;
  return 2.0 * w3 * sw1 + 2.0 * a * w3 - 4.0 * w2 * sw1 * sw1 -
         4.0 * a * w2 * sw1 - 4.0 * a * a * w2 + 3.0 * w2 * s * w2 +
         6.0 * a * a * a * w1;
}

inline ComplexMatrix flow_b1(const ComplexMatrix& w1, const ComplexMatrix& w) {
  return -(w1 * w.adjoint() * w1);
}

inline ComplexMatrix flow_b2(const ComplexMatrix& w2, const ComplexMatrix& w1,
                             const ComplexMatrix& w) {
  const ComplexMatrix s = w.adjoint();
  const ComplexMatrix a = w1 * s;
  return -1.5 * w2 * s * w1 + 2.0 * a * a * w1 - 1.5 * a * w2;
}

inline ComplexMatrix flow_g(const NodeJet& j) { return flow_g(j.w3, j.w2, j.w1, j.w); }
inline ComplexMatrix flow_b1(const NodeJet& j) { return flow_b1(j.w1, j.w); }
inline ComplexMatrix flow_b2(const NodeJet& j) { return flow_b2(j.w2, j.w1, j.w); }

/// -d^4 U + G at every node.
inline MatrixArray rhs_U(const SegmentCurve& u) {
  if (u.intervals() < 12) throw Error("rhs_U: need at least 12 grid intervals");
  const auto f = u.view();
  const double h = u.h();
  MatrixArray out;
  out.reserve(f.size());
  for (int j = 0; j <= u.intervals(); ++j) {
    const NodeJet jet = jet_at(u, j);
    out.push_back(-fd_at(f, h, 4, j) + flow_g(jet));
  }
  return out;
}

/// s^2 (d^2 V + b1(dV, V)) at every node.
inline MatrixArray rhs_V(const SegmentCurve& v, double sigma) {
  require_grid(v.samples.size(), "rhs_V");
  const auto f = v.view();
  const double h = v.h();
  MatrixArray out;
  out.reserve(f.size());
  for (int j = 0; j <= v.intervals(); ++j) {
    const ComplexMatrix w1 = fd_at(f, h, 1, j);
    out.push_back(sigma * sigma * (fd_at(f, h, 2, j) + flow_b1(w1, f[static_cast<std::size_t>(j)])));
  }
  return out;
}

/// Boundary data at one junction x_l (1 <= l < q) or at the terminal end x_q.
struct JunctionTerms {
  int l = 0;
  ComplexMatrix b2_left;   // b2 of U_l at x_l
  ComplexMatrix b2_right;  // b2 of U_{l+1} at x_l (zero at x_q)
  ComplexMatrix v_x;       // d_x V_l at x_l
  /// Right-hand side of the third-derivative row:
  ///   -d^3U_l + d^3U_{l+1} + v_x / s^2 = -b2_right + b2_left          (l < q)
  ///    d^3U_q - v_x / s^2 = -b2_left                                  (l = q)
  ComplexMatrix rhs;
  bool terminal = false;
};

inline std::vector<JunctionTerms> junction_terms(const SplineState& s) {
  const int q = s.q();
  const int m = s.intervals();
  std::vector<JunctionTerms> out;
  out.reserve(static_cast<std::size_t>(q));
  for (int l = 1; l <= q; ++l) {
    const auto& ul = s.u_segments[static_cast<std::size_t>(l - 1)];
    const auto& vl = s.v_segments[static_cast<std::size_t>(l - 1)];
    JunctionTerms jt;
    jt.l = l;
    jt.terminal = (l == q);
    jt.b2_left = flow_b2(jet_at(ul, m, 2));
    jt.v_x = fd_at(vl.view(), vl.h(), 1, m);
    if (l < q) {
      jt.b2_right = flow_b2(jet_at(s.u_segments[static_cast<std::size_t>(l)], 0, 2));
      jt.rhs = jt.b2_left - jt.b2_right;
    } else {
      jt.b2_right = ComplexMatrix::Zero(s.dim(), s.dim());
      jt.rhs = -jt.b2_left;
    }
    out.push_back(std::move(jt));
  }
  return out;
}

}  // namespace qspline
