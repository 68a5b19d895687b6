#pragma once

// JSON configuration, state and diagnostics serialization.
// Matrices are arrays of [re, im] pairs in row-major order.

#include "qspline/flow_solver.hpp"
#include "qspline/initializer.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace qspline {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "qspline 1.0.0";
inline constexpr double kKnotUnitarityTol = 1e-8;

inline json matrix_to_json(const ComplexMatrix& a) {
  json out = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.push_back({a(i, j).real(), a(i, j).imag()});
  return out;
}

inline ComplexMatrix matrix_from_json(const json& j, int n, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != n * n) {
    throw Error(what + ": expected " + std::to_string(n * n) + " [re, im] entries");
  }
  ComplexMatrix a(n, n);
  for (int k = 0; k < n * n; ++k) {
    const json& e = j[static_cast<std::size_t>(k)];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      throw Error(what + ": entry " + std::to_string(k) + " is not an [re, im] pair of numbers");
    }
    a(k / n, k % n) = cplx{e[0].get<double>(), e[1].get<double>()};
  }
  return a;
}

struct RunConfig {
  FlowConfig flow;
  bool allow_retract_knots = false;
};

namespace detail {

inline const json& require_key(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(std::string("config: missing field '") + key + "'");
  return j.at(key);
}

inline double get_number(const json& j, const char* key) {
  const json& v = require_key(j, key);
  if (!v.is_number()) throw Error(std::string("config: field '") + key + "' must be a number");
  return v.get<double>();
}

inline long long get_integer(const json& j, const char* key) {
  const json& v = require_key(j, key);
  if (!v.is_number_integer()) throw Error(std::string("config: field '") + key + "' must be an integer");
  return v.get<long long>();
}

// Knots are accepted when |U*U - Id| and |det U - 1| are within 1e-8; with
// allow_retract they are projected onto SU(N) instead of rejected.
inline UnitaryPoint read_knot(const json& j, int n, int index, bool allow_retract) {
  const ComplexMatrix a = matrix_from_json(j, n, "knot " + std::to_string(index));
  if (!all_finite(a)) throw Error("knot " + std::to_string(index) + " has non-finite entries");
  const double defect = std::max(unitarity_defect(a), std::abs(determinant(a) - cplx{1.0, 0.0}));
  if (defect > kKnotUnitarityTol) {
    if (!allow_retract) {
      throw Error("knot " + std::to_string(index) + " is not in SU(" + std::to_string(n) +
                  ") (defect " + std::to_string(defect) + "); set allow_retract_knots = true to project it");
    }
    return retract(a);
  }
  return UnitaryPoint::trusted(a);
}

inline ComplexMatrix read_tangent(const json& j, const ComplexMatrix& at, int n, const char* name) {
  const ComplexMatrix v = matrix_from_json(j, n, name);
  const ComplexMatrix p = project_tangent(v, at);
  if (frob_norm(p - v) > kKnotUnitarityTol * std::max(1.0, frob_norm(v))) {
    throw Error(std::string(name) + " is not tangent to SU(N) at its knot");
  }
  return p;
}

}  // namespace detail

/// Strict parse: unknown keys, missing fields and invalid values are errors.
inline RunConfig parse_config(const json& j) {
  static const std::set<std::string> known = {
      "N", "q", "sigma", "M", "dt", "t_max", "z1_stop", "endpoint_mode", "knots", "phi0_prime",
      "phiq_prime", "seed", "unitarity_tol", "bc_tol", "diagnostic_tol", "snapshot_every",
      "stability_factor", "allow_retract_knots"};
  if (!j.is_object()) throw Error("config: top level must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error("config: unknown key '" + key + "'");
  }
  RunConfig rc;
  FlowConfig& c = rc.flow;
  if (j.contains("allow_retract_knots")) {
    if (!j["allow_retract_knots"].is_boolean()) throw Error("config: allow_retract_knots must be a boolean");
    rc.allow_retract_knots = j["allow_retract_knots"].get<bool>();
  }
  const long long n = detail::get_integer(j, "N");
  const long long q = detail::get_integer(j, "q");
  if (n < 1 || n > 16) throw Error("config: N must be in 1..16");
  if (q < 1 || q > 64) throw Error("config: q must be in 1..64");
  KnotData& kd = c.knot_data;
  kd.n = static_cast<int>(n);
  kd.q = static_cast<int>(q);
  const json& mode = detail::require_key(j, "endpoint_mode");
  if (mode == "natural") {
    kd.endpoint_mode = EndpointMode::NaturalSecondDerivative;
  } else if (mode == "clamped") {
    kd.endpoint_mode = EndpointMode::ClampedVelocity;
  } else {
    throw Error("config: endpoint_mode must be \"natural\" or \"clamped\"");
  }
  const json& knots = detail::require_key(j, "knots");
  if (!knots.is_array() || static_cast<long long>(knots.size()) != q + 1) {
    throw Error("config: knots must be an array of q + 1 = " + std::to_string(q + 1) + " matrices");
  }
  for (int l = 0; l <= kd.q; ++l) {
    kd.knots.push_back(detail::read_knot(knots[static_cast<std::size_t>(l)], kd.n, l, rc.allow_retract_knots));
  }
  kd.phi0_prime = detail::read_tangent(detail::require_key(j, "phi0_prime"), kd.knot(0), kd.n, "phi0_prime");
  if (kd.endpoint_mode == EndpointMode::ClampedVelocity) {
    if (!j.contains("phiq_prime")) throw Error("config: endpoint_mode \"clamped\" requires phiq_prime");
    kd.phiq_prime = detail::read_tangent(j["phiq_prime"], kd.knot(kd.q), kd.n, "phiq_prime");
  } else if (j.contains("phiq_prime")) {
    throw Error("config: phiq_prime is only allowed with endpoint_mode \"clamped\"");
  }
  c.sigma = detail::get_number(j, "sigma");
  const long long m = detail::get_integer(j, "M");
  if (m < 16 || m > 4096) throw Error("config: M must be in 16..4096");
  c.M = static_cast<int>(m);
  c.t_max = detail::get_number(j, "t_max");
  c.z1_stop = detail::get_number(j, "z1_stop");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0)) {
      throw Error("config: seed must be a non-negative integer");
    }
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("stability_factor")) c.stability_factor = detail::get_number(j, "stability_factor");
  if (j.contains("dt")) c.dt = detail::get_number(j, "dt");
  if (j.contains("unitarity_tol")) c.unitarity_tol = detail::get_number(j, "unitarity_tol");
  if (j.contains("bc_tol")) c.bc_tol = detail::get_number(j, "bc_tol");
  if (j.contains("diagnostic_tol")) c.diagnostic_tol = detail::get_number(j, "diagnostic_tol");
  if (j.contains("snapshot_every")) {
    const long long se = detail::get_integer(j, "snapshot_every");
    if (se < 1) throw Error("config: snapshot_every must be >= 1");
    c.snapshot_every = static_cast<int>(se);
  }
  c.validate();
  c.dt = c.effective_dt();
  return rc;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline RunConfig parse_config_file(const std::string& path) { return parse_config(read_json_file(path)); }

/// Fully resolved configuration; parsing it again reproduces the run.
inline json config_to_json(const RunConfig& rc) {
  const FlowConfig& c = rc.flow;
  const KnotData& kd = c.knot_data;
  json j;
  j["N"] = kd.n;
  j["q"] = kd.q;
  j["sigma"] = c.sigma;
  j["M"] = c.M;
  j["dt"] = c.effective_dt();
  j["t_max"] = c.t_max;
  j["z1_stop"] = c.z1_stop;
  j["endpoint_mode"] = to_string(kd.endpoint_mode);
  j["knots"] = json::array();
  for (int l = 0; l <= kd.q; ++l) j["knots"].push_back(matrix_to_json(kd.knot(l)));
  j["phi0_prime"] = matrix_to_json(kd.phi0_prime);
  if (kd.phiq_prime) j["phiq_prime"] = matrix_to_json(*kd.phiq_prime);
  j["seed"] = c.seed;
  j["unitarity_tol"] = c.unitarity_tol;
  j["bc_tol"] = c.bc_tol;
  j["diagnostic_tol"] = c.diagnostic_tol;
  j["snapshot_every"] = c.snapshot_every;
  j["stability_factor"] = c.stability_factor;
  j["allow_retract_knots"] = rc.allow_retract_knots;
  return j;
}

inline json segments_to_json(const std::vector<SegmentCurve>& segs) {
  json out = json::array();
  for (const auto& s : segs) {
    json nodes = json::array();
    for (const auto& u : s.samples) nodes.push_back(matrix_to_json(u));
    out.push_back(std::move(nodes));
  }
  return out;
}

inline json state_to_json(const SplineState& s) {
  return json{{"t", s.t}, {"N", s.dim()}, {"q", s.q()}, {"M", s.intervals()},
              {"u_segments", segments_to_json(s.u_segments)},
              {"v_segments", segments_to_json(s.v_segments)}};
}

/// Loads a state and checks it against the SplineState invariants.
inline SplineState state_from_json(const json& j, double unitarity_tol = 1e-10) {
  const int n = static_cast<int>(detail::get_integer(j, "N"));
  const int q = static_cast<int>(detail::get_integer(j, "q"));
  const int m = static_cast<int>(detail::get_integer(j, "M"));
  SplineState s;
  s.t = detail::get_number(j, "t");
  auto read = [&](const char* key, std::vector<SegmentCurve>& out) {
    const json& segs = detail::require_key(j, key);
    if (!segs.is_array() || static_cast<int>(segs.size()) != q) throw Error(std::string(key) + ": expected q segments");
    for (int l = 0; l < q; ++l) {
      const json& nodes = segs[static_cast<std::size_t>(l)];
      if (!nodes.is_array() || static_cast<int>(nodes.size()) != m + 1) {
        throw Error(std::string(key) + ": expected M + 1 nodes per segment");
      }
      MatrixArray a;
      for (int k = 0; k <= m; ++k) {
        a.push_back(matrix_from_json(nodes[static_cast<std::size_t>(k)], n, key));
      }
      out.emplace_back(l + 1, std::move(a));
    }
  };
  read("u_segments", s.u_segments);
  read("v_segments", s.v_segments);
  s.validate_shape();
  if (s.unitarity_drift() > unitarity_tol) throw Error("state: nodes are not in SU(N)");
  return s;
}

/// Flat object: scalar diagnostics plus bc.<name> and fit_error.<l> entries.
inline json report_to_json(const DiagnosticsReport& r) {
  json j;
  j["t"] = r.t;
  j["bending_energy"] = r.bending_energy;
  j["tension_energy"] = r.tension_energy;
  j["F_sigma"] = r.total_energy;
  j["cubic_residual_sup"] = r.cubic_residual_sup;
  j["cubic_residual_l2"] = r.cubic_residual_l2;
  j["geodesic_residual_sup"] = r.geodesic_residual_sup;
  j["unitarity_drift"] = r.unitarity_drift;
  j["z1"] = r.z1_speed;
  for (const auto& [k, v] : r.bc_residuals) j["bc." + k] = v;
  for (std::size_t l = 0; l < r.fit_error.size(); ++l) j["fit_error." + std::to_string(l + 1)] = r.fit_error[l];
  return j;
}

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string energy_trace_csv(const FlowTrajectory& tr) {
  std::ostringstream os;
  os << "t,F_sigma,bending,tension,z1,cubic_residual_sup,unitarity_drift\n";
  for (const auto& s : tr.snapshots) {
    const auto& d = s.diagnostics;
    os << format_real(s.t) << ',' << format_real(d.total_energy) << ',' << format_real(d.bending_energy) << ','
       << format_real(d.tension_energy) << ',' << format_real(d.z1_speed) << ','
       << format_real(d.cubic_residual_sup) << ',' << format_real(d.unitarity_drift) << '\n';
  }
  return os.str();
}

inline std::string snapshots_jsonl(const FlowTrajectory& tr) {
  std::ostringstream os;
  for (const auto& s : tr.snapshots) {
    json j;
    j["t"] = s.t;
    j["diagnostics"] = report_to_json(s.diagnostics);
    j["u_segments"] = segments_to_json(s.state.u_segments);
    j["v_segments"] = segments_to_json(s.state.v_segments);
    os << j.dump() << '\n';
  }
  return os.str();
}

inline json compatibility_to_json(const CompatibilityReport& r) {
  json j;
  j["residuals"] = r.residuals;
  j["tolerances"] = r.tolerances;
  j["max_residual"] = r.max_residual;
  j["pass"] = r.pass;
  return j;
}

}  // namespace qspline
