#pragma once

// Linearly implicit time stepping of the coupled spline flow
//
//   d_t U_l = -d^4 U_l + G,   d_t V_l = s^2 (d^2 V_l + b1)
//
// with clamp, junction and endpoint rows. Each step solves for one increment
// xi_j in su(N) per grid node (U_j <- retract(U_j + xi_j U_j)); PDE rows and
// boundary rows are both read in the tangent space of their reference node.
// The fourth/second-order stencils and the linear parts of the boundary rows
// are implicit, G, b1, b2 are taken at the old time level.

#include "qspline/banded.hpp"
#include "qspline/energy_diag.hpp"
#include "qspline/parallel.hpp"

#include <cstdint>
#include <functional>
#include <limits>

namespace qspline {

struct FlowConfig {
  KnotData knot_data;
  double sigma = 1.0;
  int M = 32;
  double dt = 0.0;  // 0 selects stability_factor * h^4
  double t_max = 1.0;
  double z1_stop = 1e-8;
  double unitarity_tol = 1e-10;
  double bc_tol = 1e-4;
  double diagnostic_tol = 1e-8;
  int snapshot_every = 100;
  std::uint64_t seed = 0;
  double stability_factor = 0.4;
  int threads = 1;

  double h() const { return 1.0 / static_cast<double>(M); }
  double max_dt() const { return stability_factor * std::pow(h(), 4); }
  double effective_dt() const { return dt > 0.0 ? dt : max_dt(); }

  void validate() const {
    knot_data.validate();
    require_sigma(sigma);
    if (M < 16) throw Error("FlowConfig: M must be >= 16, got " + std::to_string(M));
    if (!(stability_factor > 0.0)) throw Error("FlowConfig: stability_factor must be positive");
    if (dt < 0.0 || !std::isfinite(dt)) throw Error("FlowConfig: dt must be positive");
    if (effective_dt() > max_dt() * (1.0 + 1e-12)) {
      throw Error("FlowConfig: dt = " + std::to_string(effective_dt()) +
                  " violates the stability guard dt <= stability_factor*h^4 = " +
                  std::to_string(max_dt()));
    }
    if (!(t_max >= 0.0)) throw Error("FlowConfig: t_max must be >= 0");
    if (!(z1_stop > 0.0)) throw Error("FlowConfig: z1_stop must be positive");
    if (snapshot_every < 1) throw Error("FlowConfig: snapshot_every must be >= 1");
    if (threads < 1) throw Error("FlowConfig: threads must be >= 1");
    if (!(unitarity_tol > 0.0) || !(bc_tol > 0.0) || !(diagnostic_tol > 0.0)) {
      throw Error("FlowConfig: tolerances must be positive");
    }
  }
};

enum class StopReason { Stationary, MaxTime, EnergyViolation, Blowup };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::Stationary: return "Stationary";
    case StopReason::MaxTime: return "MaxTime";
    case StopReason::EnergyViolation: return "EnergyViolation";
    case StopReason::Blowup: return "Blowup";
  }
  return "?";
}

/// Raised by a step that cannot produce a valid state.
class BlowupError : public Error {
 public:
  using Error::Error;
};

struct Snapshot {
  double t = 0.0;
  SplineState state;
  DiagnosticsReport diagnostics;
};

struct FlowTrajectory {
  std::vector<Snapshot> snapshots;
  SplineState terminal_state;
  bool converged = false;
  StopReason stop_reason = StopReason::MaxTime;
  long steps = 0;
  std::string message;
};

/// Per-step record handed to an optional observer.
struct StepRecord {
  long step = 0;
  double t = 0.0;
  double energy_before = 0.0;
  double energy_after = 0.0;
  double z1 = 0.0;
  double slack = 0.0;
  const SplineState* state = nullptr;
};

namespace detail {

/// One block row of the step system: sum_k w_k xi_k U_k read in the tangent
/// space at node `proj` equals the tangent part of `rhs` there.
struct BlockRow {
  int slot = 0;
  int proj = 0;
  std::vector<std::pair<int, double>> cols;
  ComplexMatrix rhs;
};

}  // namespace detail

class FlowStepper {
 public:
  explicit FlowStepper(FlowConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    q_ = cfg_.knot_data.q;
    m_ = cfg_.M;
    n_ = cfg_.knot_data.n;
    basis_ = su_basis(n_);
    k_ = static_cast<int>(basis_.size());
    products_.resize(static_cast<std::size_t>(k_ * k_));
    for (int b = 0; b < k_; ++b)
      for (int a = 0; a < k_; ++a)
        products_[static_cast<std::size_t>(b * k_ + a)] = basis_[static_cast<std::size_t>(b)].adjoint() *
                                                          basis_[static_cast<std::size_t>(a)];
    build_layout();
  }

  const FlowConfig& config() const { return cfg_; }
  double dt() const { return cfg_.effective_dt(); }
  int node_count() const { return nodes_; }

  SplineState step(const SplineState& s) const {
    check_shape(s);
    if (k_ == 0) {  // SU(1) is a point
      SplineState out = s;
      out.t = s.t + dt();
      return out;
    }
    const std::vector<ComplexMatrix> x = gather(s);
    const std::vector<detail::BlockRow> rows = assemble_rows(s);
    int lo = 0, hi = 0;
    for (const auto& r : rows)
      for (const auto& [c, w] : r.cols) {
        lo = std::max(lo, r.slot - c);
        hi = std::max(hi, c - r.slot);
      }
    const int dim = nodes_ * k_;
    BandedMatrix a(dim, (lo + 1) * k_ - 1, (hi + 1) * k_ - 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    parallel_for(static_cast<int>(rows.size()), cfg_.threads, [&](int i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      const ComplexMatrix pinv = x[static_cast<std::size_t>(r.proj)].adjoint();
      const int row0 = r.slot * k_;
      for (const auto& [c, w] : r.cols) {
        const ComplexMatrix mk = x[static_cast<std::size_t>(c)] * pinv;
        for (int b = 0; b < k_; ++b)
          for (int aa = 0; aa < k_; ++aa)
            a.at(row0 + b, c * k_ + aa) += w * retrace(products_[static_cast<std::size_t>(b * k_ + aa)], mk);
      }
      const ComplexMatrix z = r.rhs * pinv;
      for (int b = 0; b < k_; ++b)
        rhs[row0 + b] = retrace(basis_[static_cast<std::size_t>(b)].adjoint(), z);
    });
    try {
      BandedLU lu(std::move(a));
      lu.solve_in_place(rhs);
    } catch (const std::exception& e) {
      throw BlowupError(std::string("linear solve failed: ") + e.what());
    }
    if (!rhs.allFinite()) throw BlowupError("linear solve produced non-finite increments");
    std::vector<ComplexMatrix> y(x.size());
    parallel_for(nodes_, cfg_.threads, [&](int i) {
      ComplexMatrix xi = ComplexMatrix::Zero(n_, n_);
      for (int aa = 0; aa < k_; ++aa) xi += rhs[i * k_ + aa] * basis_[static_cast<std::size_t>(aa)];
      const auto ii = static_cast<std::size_t>(i);
      try {
        y[ii] = retract(x[ii] + xi * x[ii]).matrix();
      } catch (const std::exception& e) {
        throw BlowupError(std::string("retraction failed: ") + e.what());
      }
    });
    SplineState out = scatter(y);
    out.t = s.t + dt();
    return out;
  }

  /// Global node id of U_l(j) / V_l(j), l 1-based.
  int u_node(int l, int j) const { return u_id_[static_cast<std::size_t>((l - 1) * (m_ + 1) + j)]; }
  int v_node(int l, int j) const { return v_id_[static_cast<std::size_t>((l - 1) * (m_ + 1) + j)]; }

 private:
  // Re tr(A M) without forming the product.
  static double retrace(const ComplexMatrix& a, const ComplexMatrix& m) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) s += (a(i, j) * m(j, i)).real();
    return s;
  }

  void build_layout() {
    const auto sz = static_cast<std::size_t>(q_ * (m_ + 1));
    u_id_.assign(sz, -1);
    v_id_.assign(sz, -1);
    int next = 0;
    for (int l = 1; l <= q_; ++l) {
      for (int j = 0; j <= m_; ++j) {
        const auto k = static_cast<std::size_t>((l - 1) * (m_ + 1) + j);
        u_id_[k] = (l > 1 && j == 0) ? u_node(l - 1, m_) : next++;
        v_id_[k] = (j == m_) ? u_id_[k] : next++;
      }
    }
    nodes_ = next;
  }

  void check_shape(const SplineState& s) const {
    s.validate_shape();
    if (s.q() != q_ || s.intervals() != m_ || s.dim() != n_) {
      throw Error("step: state does not match the configured grid");
    }
  }

  std::vector<ComplexMatrix> gather(const SplineState& s) const {
    std::vector<ComplexMatrix> x(static_cast<std::size_t>(nodes_));
    for (int l = 1; l <= q_; ++l) {
      const auto& u = s.u_segments[static_cast<std::size_t>(l - 1)].samples;
      const auto& v = s.v_segments[static_cast<std::size_t>(l - 1)].samples;
      for (int j = 0; j <= m_; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (!(l > 1 && j == 0)) x[static_cast<std::size_t>(u_node(l, j))] = u[jj];
        if (j < m_) x[static_cast<std::size_t>(v_node(l, j))] = v[jj];
      }
    }
    return x;
  }

  SplineState scatter(const std::vector<ComplexMatrix>& y) const {
    SplineState s;
    for (int l = 1; l <= q_; ++l) {
      MatrixArray u, v;
      for (int j = 0; j <= m_; ++j) {
        u.push_back(y[static_cast<std::size_t>(u_node(l, j))]);
        v.push_back(y[static_cast<std::size_t>(v_node(l, j))]);
      }
      s.u_segments.emplace_back(l, std::move(u));
      s.v_segments.emplace_back(l, std::move(v));
    }
    return s;
  }

  // Adds `scale` times the order-k stencil of a curve at node j.
  void add_stencil(detail::BlockRow& r, bool is_v, int l, int order, int j, double scale) const {
    const Stencil st = stencil_at(order, j, m_);
    const double f = scale / std::pow(1.0 / m_, order);
    for (std::size_t i = 0; i < st.w.size(); ++i) {
      if (st.w[i] == 0.0) continue;
      const int node = j + st.first + static_cast<int>(i);
      r.cols.emplace_back(is_v ? v_node(l, node) : u_node(l, node), f * st.w[i]);
    }
  }

  std::vector<detail::BlockRow> assemble_rows(const SplineState& s) const {
    const double h = 1.0 / m_;
    const double tau = dt();
    const double s2 = cfg_.sigma * cfg_.sigma;
    const KnotData& kd = cfg_.knot_data;
    std::vector<detail::BlockRow> rows;
    rows.reserve(static_cast<std::size_t>(nodes_));
    auto pinned = [&](int id, const ComplexMatrix& target, const ComplexMatrix& cur) {
      detail::BlockRow r;
      r.slot = r.proj = id;
      r.cols.emplace_back(id, 1.0);
      r.rhs = target - cur;
      rows.push_back(std::move(r));
    };

    // Interior PDE rows, evaluated per segment in parallel.
    std::vector<std::vector<detail::BlockRow>> pde(static_cast<std::size_t>(2 * q_));
    parallel_for(2 * q_, cfg_.threads, [&](int task) {
      const int l = task / 2 + 1;
      const bool is_v = task % 2 == 1;
      auto& out = pde[static_cast<std::size_t>(task)];
      if (!is_v) {
        const auto& u = s.u_segments[static_cast<std::size_t>(l - 1)];
        for (int j = 2; j <= m_ - 2; ++j) {
          detail::BlockRow r;
          r.slot = r.proj = u_node(l, j);
          r.cols.emplace_back(r.slot, 1.0);
          add_stencil(r, false, l, 4, j, tau);
          const NodeJet jet = jet_at(u, j);
          r.rhs = tau * (-fd_at(u.view(), h, 4, j) + flow_g(jet));
          out.push_back(std::move(r));
        }
      } else {
        const auto& v = s.v_segments[static_cast<std::size_t>(l - 1)];
        for (int j = 1; j <= m_ - 1; ++j) {
          detail::BlockRow r;
          r.slot = r.proj = v_node(l, j);
          r.cols.emplace_back(r.slot, 1.0);
          add_stencil(r, true, l, 2, j, -s2 * tau);
          const auto& vj = v.samples[static_cast<std::size_t>(j)];
          r.rhs = s2 * tau * (fd_at(v.view(), h, 2, j) + flow_b1(fd_at(v.view(), h, 1, j), vj));
          out.push_back(std::move(r));
        }
      }
    });
    for (auto& group : pde)
      for (auto& r : group) rows.push_back(std::move(r));

    const auto& u1 = s.u_segments.front();
    pinned(u_node(1, 0), kd.knot(0), u1.front());
    {
      detail::BlockRow r;
      r.slot = u_node(1, 1);
      r.proj = u_node(1, 0);
      add_stencil(r, false, 1, 1, 0, 1.0);
      r.rhs = kd.phi0_prime - fd_at(u1.view(), h, 1, 0);
      rows.push_back(std::move(r));
    }
    for (int l = 1; l <= q_; ++l) {
      const auto& ul = s.u_segments[static_cast<std::size_t>(l - 1)];
      const auto& vl = s.v_segments[static_cast<std::size_t>(l - 1)];
      pinned(v_node(l, 0), kd.knot(l), vl.front());
      const int jn = u_node(l, m_);
      const NodeJet a = jet_at(ul, m_);
      const ComplexMatrix vx = fd_at(vl.view(), h, 1, m_);
      if (l < q_) {
        const auto& un = s.u_segments[static_cast<std::size_t>(l)];
        const NodeJet b = jet_at(un, 0);
        detail::BlockRow c1, c2, fx;
        c1.slot = u_node(l, m_ - 1);
        c2.slot = jn;
        fx.slot = u_node(l + 1, 1);
        c1.proj = c2.proj = fx.proj = jn;
        add_stencil(c1, false, l + 1, 1, 0, 1.0);
        add_stencil(c1, false, l, 1, m_, -1.0);
        c1.rhs = a.w1 - b.w1;
        add_stencil(c2, false, l + 1, 2, 0, 1.0);
        add_stencil(c2, false, l, 2, m_, -1.0);
        c2.rhs = a.w2 - b.w2;
        add_stencil(fx, false, l + 1, 3, 0, 1.0);
        add_stencil(fx, false, l, 3, m_, -1.0);
        add_stencil(fx, true, l, 1, m_, 1.0 / s2);
        fx.rhs = (flow_b2(a) - flow_b2(b)) - (b.w3 - a.w3 + vx / s2);
        rows.push_back(std::move(c1));
        rows.push_back(std::move(c2));
        rows.push_back(std::move(fx));
      } else {
        detail::BlockRow e, fx;
        e.slot = u_node(l, m_ - 1);
        fx.slot = jn;
        e.proj = fx.proj = jn;
        if (kd.endpoint_mode == EndpointMode::NaturalSecondDerivative) {
          add_stencil(e, false, l, 2, m_, 1.0);
          e.rhs = -(a.w2 + flow_b1(a));
        } else {
          add_stencil(e, false, l, 1, m_, 1.0);
          e.rhs = kd.end_velocity(a.w) - a.w1;
        }
        add_stencil(fx, false, l, 3, m_, 1.0);
        add_stencil(fx, true, l, 1, m_, -1.0 / s2);
        fx.rhs = -flow_b2(a) - (a.w3 - vx / s2);
        rows.push_back(std::move(e));
        rows.push_back(std::move(fx));
      }
    }
    if (static_cast<int>(rows.size()) != nodes_) throw Error("internal: step system is not square");
    return rows;
  }

  FlowConfig cfg_;
  int q_ = 1, m_ = 16, n_ = 2, k_ = 3, nodes_ = 0;
  std::vector<ComplexMatrix> basis_;
  std::vector<ComplexMatrix> products_;
  std::vector<int> u_id_, v_id_;
};

/// One step with a throwaway stepper.
inline SplineState step(const SplineState& s, const FlowConfig& cfg) { return FlowStepper(cfg).step(s); }

/// Allowed energy rise per step: the O(h^2) inconsistency between the discrete
/// energy and the discrete flow, plus a floor for rounding in the energy sum.
inline double dissipation_slack(double dt, double z1, double h, double energy = 0.0) {
  return 10.0 * dt * z1 * h * h + 1e-12 * std::max(1.0, std::abs(energy));
}

/// Iterates the stepper until stationary, out of time, or failed.
inline FlowTrajectory run(const FlowConfig& cfg, const SplineState& initial,
                          const std::function<void(const StepRecord&)>& observer = {}) {
  const FlowStepper stepper(cfg);
  const double dt = stepper.dt();
  const double h = cfg.h();
  FlowTrajectory tr;
  auto snap = [&](const SplineState& s, double z1) {
    if (!tr.snapshots.empty() && tr.snapshots.back().t >= s.t) return;
    Snapshot sn;
    sn.t = s.t;
    sn.state = s;
    sn.diagnostics = make_report(s, cfg.knot_data, cfg.sigma, z1);
    tr.snapshots.push_back(std::move(sn));
  };
  SplineState cur = initial;
  double energy = total_energy(cur, cfg.sigma);
  double z1 = 0.0;
  snap(cur, z1);
  const double t0 = initial.t;
  long n = 0;
  tr.stop_reason = StopReason::MaxTime;
  // Step count that reaches t_max, guarded against rounding in t0 + n*dt.
  const long n_max = static_cast<long>(std::ceil((cfg.t_max - 1e-12 * dt) / dt));
  while (n < n_max) {
    SplineState next;
    double e_next = 0.0;
    try {
      next = stepper.step(cur);
      next.t = t0 + static_cast<double>(n + 1) * dt;
      if (next.unitarity_drift() > std::max(cfg.unitarity_tol, 1e-8)) {
        throw BlowupError("unitarity drift " + std::to_string(next.unitarity_drift()));
      }
      e_next = total_energy(next, cfg.sigma);
      z1 = z1_speed(cur, next, dt, cfg.sigma);
      if (!std::isfinite(e_next) || !std::isfinite(z1)) throw BlowupError("non-finite energy");
    } catch (const std::exception& e) {
      tr.stop_reason = StopReason::Blowup;
      tr.message = e.what();
      break;
    }
    const double slack = dissipation_slack(dt, z1, h, energy);
    if (observer) {
      StepRecord rec{n + 1, next.t, energy, e_next, z1, slack, &next};
      observer(rec);
    }
    if (e_next > energy + slack) {
      tr.stop_reason = StopReason::EnergyViolation;
      tr.message = "energy rose from " + std::to_string(energy) + " to " + std::to_string(e_next) +
                   " at t = " + std::to_string(next.t);
      break;
    }
    cur = std::move(next);
    energy = e_next;
    ++n;
    const bool stationary = z1 <= cfg.z1_stop;
    if (stationary || n == n_max || n % cfg.snapshot_every == 0) snap(cur, z1);
    if (stationary) {
      tr.stop_reason = StopReason::Stationary;
      tr.converged = true;
      break;
    }
  }
  snap(cur, z1);
  tr.steps = n;
  tr.terminal_state = cur;
  return tr;
}

}  // namespace qspline
