#pragma once

// Command-line driver logic; tools/qspline.cpp only forwards to cli::main.
//
//   qspline run <config> --out <dir> [--threads k] [--snapshot-every n]
//   qspline check <config>
//
// Exit codes for run: 0 converged with boundary residuals within bc_tol,
// 1 not converged, 2 blowup, 3 energy violation, 4 invalid input or I/O error.

#include "qspline/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>

namespace qspline::cli {

namespace fs = std::filesystem;


inline constexpr int kExitInputError = 4;

inline std::string wall_clock() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline int exit_code(const FlowTrajectory& tr, double bc_tol, bool* bc_ok) {
  const auto& d = tr.snapshots.back().diagnostics;
  *bc_ok = max_value(d.bc_residuals) <= bc_tol;
  switch (tr.stop_reason) {
    case StopReason::Blowup: return 2;
    case StopReason::EnergyViolation: return 3;
    default: return (tr.converged && *bc_ok) ? 0 : 1;
  }
}

inline int run_command(const std::string& config_path, const std::string& out_dir, int threads, int snapshot_every) {
  RunConfig rc = parse_config_file(config_path);
  if (snapshot_every > 0) rc.flow.snapshot_every = snapshot_every;
  rc.flow.threads = threads;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + out_dir + "': " + ec.message());

  const std::string start = wall_clock();
  const SplineState initial = build_initial(rc.flow.knot_data, rc.flow.M);
  const CompatibilityReport compat = check_compatibility(initial, rc.flow.knot_data, rc.flow.sigma);
  if (!compat.pass) {
    std::cerr << "warning: initial data is not compatible to order 0 (max residual "
              << format_real(compat.max_residual) << "); the flow starts with a transient\n";
  }
  const FlowTrajectory tr = run(rc.flow, initial);
  bool bc_ok = false;
  const int code = exit_code(tr, rc.flow.bc_tol, &bc_ok);

  write_file(dir / "snapshots.jsonl", snapshots_jsonl(tr));
  write_file(dir / "energy_trace.csv", energy_trace_csv(tr));
  write_file(dir / "terminal_state.json", state_to_json(tr.terminal_state).dump() + "\n");
  json manifest;
  manifest["config_echo"] = config_to_json(rc);
  manifest["tool_version"] = kToolVersion;
  manifest["start"] = start;
  manifest["end"] = wall_clock();
  manifest["stop_reason"] = to_string(tr.stop_reason);
  manifest["converged"] = tr.converged;
  manifest["steps"] = tr.steps;
  manifest["message"] = tr.message;
  manifest["threads"] = threads;
  manifest["boundary_residuals_within_bc_tol"] = bc_ok;
  manifest["terminal_diagnostics"] = report_to_json(tr.snapshots.back().diagnostics);
  manifest["initial_compatibility"] = compatibility_to_json(compat);
  manifest["exit_code"] = code;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "stop_reason=" << to_string(tr.stop_reason) << " steps=" << tr.steps
            << " t=" << format_real(tr.terminal_state.t)
            << " F_sigma=" << format_real(tr.snapshots.back().diagnostics.total_energy) << "\n";
  if (!tr.message.empty()) std::cerr << tr.message << "\n";
  return code;
}

inline int check_command(const std::string& config_path) {
  const RunConfig rc = parse_config_file(config_path);
  const SplineState initial = build_initial(rc.flow.knot_data, rc.flow.M);
  const CompatibilityReport rep = check_compatibility(initial, rc.flow.knot_data, rc.flow.sigma);
  std::cout << compatibility_to_json(rep).dump(2) << "\n";
  return rep.pass ? 0 : 1;
}

inline int main(int argc, char** argv) {
  CLI::App app{"Quantum spline flow on SU(N)"};
  app.require_subcommand(1);
  int threads = 0;
  int snapshot_every = 0;
  app.add_option("--threads", threads, "worker threads (default: QSPLINE_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--snapshot-every", snapshot_every, "steps between snapshots")->check(CLI::PositiveNumber);

  std::string config, out;
  auto* run_cmd = app.add_subcommand("run", "run the flow and write snapshots, traces and a manifest");
  run_cmd->add_option("config", config, "JSON configuration")->required();
  run_cmd->add_option("--out", out, "output directory")->required();
  run_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_option("--snapshot-every", snapshot_every, "steps between snapshots")->check(CLI::PositiveNumber);

  auto* check_cmd = app.add_subcommand("check", "print the order-0 compatibility report of the initial data");
  check_cmd->add_option("config", config, "JSON configuration")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInputError;
  }
  if (threads <= 0) threads = threads_from_env();
  try {
    if (*run_cmd) return run_command(config, out, threads, snapshot_every);
    return check_command(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

}  // namespace qspline::cli
