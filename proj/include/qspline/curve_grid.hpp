#pragma once

// Segmented uniform grids on [x_0, x_q] (x_l = l), finite-difference stencils
// and discrete covariant derivatives along SU(N)-valued curves.

#include "qspline/sun_core.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qspline {

using MatrixArray = std::vector<ComplexMatrix>;

/// One stencil: offsets relative to the evaluation node and weights in units
/// of h^-order.
struct Stencil {
  int first;  // offset of the first weight
  std::vector<double> w;
};

namespace detail {

// Second-order stencils. Central ones are used wherever they fit; near an end
// the narrowest one-sided window of order+2 points is shifted inward. Entries
// for the right end are the left-end mirrors with sign (-1)^order.
struct StencilTable {
  Stencil central;
  std::vector<Stencil> left;  // left[j] is used at node j
};

inline const StencilTable& stencil_table(int order) {
  static const std::array<StencilTable, 4> tables = {{
      {{-1, {-0.5, 0.0, 0.5}}, {{0, {-1.5, 2.0, -0.5}}}},
      {{-1, {1.0, -2.0, 1.0}}, {{0, {2.0, -5.0, 4.0, -1.0}}}},
      {{-2, {-0.5, 1.0, 0.0, -1.0, 0.5}},
       {{0, {-2.5, 9.0, -12.0, 7.0, -1.5}}, {-1, {-1.5, 5.0, -6.0, 3.0, -0.5}}}},
      {{-2, {1.0, -4.0, 6.0, -4.0, 1.0}},
       {{0, {3.0, -14.0, 26.0, -24.0, 11.0, -2.0}},
        {-1, {2.0, -9.0, 16.0, -14.0, 6.0, -1.0}}}},
  }};
  if (order < 1 || order > 4) throw Error("stencil order must be in 1..4");
  return tables[static_cast<std::size_t>(order - 1)];
}

}  // namespace detail

inline constexpr int kMinStencilIntervals = 8;

/// Stencil for the `order`-th derivative at node j of a grid with M intervals.
inline Stencil stencil_at(int order, int j, int m) {
  const auto& t = detail::stencil_table(order);
  const int half = static_cast<int>(t.left.size());
  if (j >= half && j <= m - half) return t.central;
  if (j < half) return t.left[static_cast<std::size_t>(j)];
  const Stencil& l = t.left[static_cast<std::size_t>(m - j)];
  Stencil r;
  const int n = static_cast<int>(l.w.size());
  r.first = -(l.first + n - 1);
  r.w.resize(l.w.size());
  const double sign = (order % 2 == 0) ? 1.0 : -1.0;
  for (int k = 0; k < n; ++k) r.w[static_cast<std::size_t>(k)] = sign * l.w[static_cast<std::size_t>(n - 1 - k)];
  return r;
}

inline void require_grid(std::size_t nodes, const char* what) {
  if (nodes < static_cast<std::size_t>(kMinStencilIntervals + 1)) {
    throw Error(std::string(what) + ": need at least " +
                std::to_string(kMinStencilIntervals) + " grid intervals, got " +
                std::to_string(nodes == 0 ? 0 : nodes - 1));
  }
}

/// Derivative of an arbitrary nodal matrix array at a single node.
inline ComplexMatrix fd_at(std::span<const ComplexMatrix> f, double h, int order, int j) {
  const int m = static_cast<int>(f.size()) - 1;
  const Stencil s = stencil_at(order, j, m);
  ComplexMatrix out = ComplexMatrix::Zero(f[0].rows(), f[0].cols());
  for (std::size_t k = 0; k < s.w.size(); ++k) {
    if (s.w[k] != 0.0) out += s.w[k] * f[static_cast<std::size_t>(j + s.first + static_cast<int>(k))];
  }
  return out / std::pow(h, order);
}

/// Entrywise finite-difference derivative of a nodal array.
inline MatrixArray fd_derivative(std::span<const ComplexMatrix> f, double h, int order) {
  require_grid(f.size(), "fd_derivative");
  if (order < 1 || order > 4) throw Error("fd_derivative: order must be in 1..4");
  MatrixArray out;
  out.reserve(f.size());
  for (int j = 0; j < static_cast<int>(f.size()); ++j) out.push_back(fd_at(f, h, order, j));
  return out;
}

/// Composite trapezoid weights on M+1 nodes.
inline std::vector<double> trapezoid_weights(int m, double h) {
  std::vector<double> w(static_cast<std::size_t>(m + 1), h);
  w.front() = w.back() = 0.5 * h;
  return w;
}

/// One curve segment U_l or V_l sampled on [x_{l-1}, x_l] with M intervals.
struct SegmentCurve {
  int segment_index = 1;  // l in 1..q
  MatrixArray samples;    // M + 1 nodes

  SegmentCurve() = default;
  SegmentCurve(int l, MatrixArray s) : segment_index(l), samples(std::move(s)) {}

  int intervals() const { return static_cast<int>(samples.size()) - 1; }
  double h() const { return 1.0 / static_cast<double>(intervals()); }
  int dim() const { return samples.empty() ? 0 : static_cast<int>(samples[0].rows()); }
  double x(int j) const { return static_cast<double>(segment_index - 1) + j * h(); }
  const ComplexMatrix& front() const { return samples.front(); }
  const ComplexMatrix& back() const { return samples.back(); }
  std::span<const ComplexMatrix> view() const { return samples; }

  /// Largest unitarity/determinant defect over the nodes.
  double unitarity_drift() const {
    double d = 0.0;
    for (const auto& u : samples) {
      d = std::max(d, unitarity_defect(u));
      d = std::max(d, std::abs(determinant(u) - cplx{1.0, 0.0}));
    }
    return d;
  }
};

inline MatrixArray fd_derivative(const SegmentCurve& c, int order) {
  return fd_derivative(c.view(), c.h(), order);
}

/// Discrete D_x^k U_x by alternating differencing and tangent projection:
/// T_1 = P(d_x U), T_{j+1} = P(d_x T_j). k = 0 returns T_1.
inline MatrixArray covariant_derivative(const SegmentCurve& c, int k) {
  if (k < 0 || k > 3) throw Error("covariant_derivative: k must be in 0..3");
  MatrixArray t = fd_derivative(c, 1);
  for (std::size_t j = 0; j < t.size(); ++j) t[j] = project_tangent(t[j], c.samples[j]);
  for (int level = 0; level < k; ++level) {
    MatrixArray dt = fd_derivative(t, c.h(), 1);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = project_tangent(dt[j], c.samples[j]);
  }
  return t;
}

/// H_j = i (d_x U)_j U_j^* at every node, Hermitian and traceless by
/// construction (the derivative is projected onto the tangent space first).
inline MatrixArray hamiltonian_track(const SegmentCurve& c) {
  require_grid(c.samples.size(), "hamiltonian_track");
  const MatrixArray ux = fd_derivative(c, 1);
  MatrixArray h;
  h.reserve(ux.size());
  for (std::size_t j = 0; j < ux.size(); ++j) h.push_back(hamiltonian(c.samples[j], ux[j]).h);
  return h;
}

enum class EndpointMode { NaturalSecondDerivative, ClampedVelocity };

inline std::string to_string(EndpointMode m) {
  return m == EndpointMode::NaturalSecondDerivative ? "natural" : "clamped";
}

/// Knot unitaries p_0..p_q at x_l = l and clamp data.
struct KnotData {
  int n = 2;
  int q = 1;
  std::vector<UnitaryPoint> knots;  // q + 1 entries
  ComplexMatrix phi0_prime;         // tangent at p_0
  EndpointMode endpoint_mode = EndpointMode::NaturalSecondDerivative;
  std::optional<ComplexMatrix> phiq_prime;  // tangent at p_q, clamped mode only

  const ComplexMatrix& knot(int l) const { return knots.at(static_cast<std::size_t>(l)).matrix(); }

  /// Clamped end velocity carried to the current end point u by right
  /// translation: phiq_prime p_q^* u.
  ComplexMatrix end_velocity(const ComplexMatrix& u) const { return *phiq_prime * knot(q).adjoint() * u; }

  void validate(double tol = 1e-10) const {
    if (n < 1) throw Error("KnotData: N must be >= 1");
    if (q < 1) throw Error("KnotData: q must be >= 1");
    if (static_cast<int>(knots.size()) != q + 1) {
      throw Error("KnotData: expected " + std::to_string(q + 1) + " knots, got " +
                  std::to_string(knots.size()));
    }
    for (std::size_t l = 0; l < knots.size(); ++l) {
      if (knots[l].dim() != n) throw Error("KnotData: knot " + std::to_string(l) + " has wrong dimension");
    }
    auto check_tangent = [&](const ComplexMatrix& v, const ComplexMatrix& p, const char* name) {
      if (v.rows() != n || v.cols() != n) throw Error(std::string("KnotData: ") + name + " has wrong dimension");
      const double r = frob_norm(project_tangent(v, p) - v);
      if (r > tol) {
        throw Error(std::string("KnotData: ") + name + " is not tangent at its knot (residual " +
                    std::to_string(r) + ")");
      }
    };
    check_tangent(phi0_prime, knot(0), "phi0_prime");
    if (endpoint_mode == EndpointMode::ClampedVelocity) {
      if (!phiq_prime) throw Error("KnotData: clamped endpoint mode requires phiq_prime");
      check_tangent(*phiq_prime, knot(q), "phiq_prime");
    }
  }
};

/// Full configuration evolved by the flow: q spline segments U_l and q
/// fitting legs V_l, all on the same grid.
struct SplineState {
  std::vector<SegmentCurve> u_segments;
  std::vector<SegmentCurve> v_segments;
  double t = 0.0;

  int q() const { return static_cast<int>(u_segments.size()); }
  int intervals() const { return u_segments.empty() ? 0 : u_segments[0].intervals(); }
  double h() const { return 1.0 / static_cast<double>(intervals()); }
  int dim() const { return u_segments.empty() ? 0 : u_segments[0].dim(); }

  const ComplexMatrix& junction(int l) const {  // U(x_l), l in 1..q
    return u_segments.at(static_cast<std::size_t>(l - 1)).back();
  }

  double unitarity_drift() const {
    double d = 0.0;
    for (const auto& s : u_segments) d = std::max(d, s.unitarity_drift());
    for (const auto& s : v_segments) d = std::max(d, s.unitarity_drift());
    return d;
  }

  /// Shape checks (segment counts, equal grids). Throws on violation.
  void validate_shape() const {
    if (u_segments.empty() || u_segments.size() != v_segments.size()) {
      throw Error("SplineState: need q >= 1 U segments and as many V segments");
    }
    const int m = intervals();
    for (const auto* group : {&u_segments, &v_segments}) {
      for (const auto& s : *group) {
        if (s.intervals() != m) throw Error("SplineState: all segments must share one grid");
        for (const auto& u : s.samples) {
          if (u.rows() != dim() || u.cols() != dim()) throw Error("SplineState: inconsistent matrix dimension");
          if (!all_finite(u)) throw Error("SplineState: non-finite sample");
        }
      }
    }
  }

  /// Largest violation of the nodal admissibility conditions (clamp position,
  /// knot Dirichlet data on V legs, junction continuity).
  double admissibility_defect(const KnotData& kd) const {
    double d = frob_norm(u_segments.front().front() - kd.knot(0));
    const int nq = q();
    for (int l = 1; l <= nq; ++l) {
      const auto& u = u_segments[static_cast<std::size_t>(l - 1)];
      const auto& v = v_segments[static_cast<std::size_t>(l - 1)];
      d = std::max(d, frob_norm(v.front() - kd.knot(l)));
      d = std::max(d, frob_norm(v.back() - u.back()));
      if (l < nq) d = std::max(d, frob_norm(u.back() - u_segments[static_cast<std::size_t>(l)].front()));
    }
    return d;
  }
};

}  // namespace qspline
