// capsim: command-line front end for the capsule simulator and its evaluation tools.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "capsim/errors.hpp"
#include "capsim/friction.hpp"
#include "capsim/json_io.hpp"
#include "capsim/mesh_fixtures.hpp"
#include "capsim/mesh_io.hpp"
#include "capsim/metrics.hpp"
#include "capsim/scenario.hpp"
#include "capsim/sensing.hpp"
#include "capsim/simulation.hpp"
#include "capsim/teleop.hpp"

namespace fs = std::filesystem;
using namespace capsim;
using jsonio::Json;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void emit(const Json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    jsonio::write_file(out, j);
  }
}

// --- simulate ----------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string controller;
  std::string commands;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto config = scenario::load_scenario(a.config);
  sim::RunOptions opts;
  if (!a.controller.empty()) opts.controller = scenario::controller_from_string(a.controller);
  if (!a.commands.empty()) opts.commands = a.commands;
  if (!a.out.empty()) opts.output_dir = a.out;
  const auto record = sim::run_simulation(config, opts);
  std::cout << sim::to_json(record).dump(2) << '\n';
  return 0;
}

// --- evaluate ----------------------------------------------------------------------

struct EvaluateArgs {
  std::string pred;
  std::string gt;
  double max_dt = 0.02;
  bool with_scale = false;
  std::string pred_cloud;
  std::string gt_cloud;
  std::string heatmap;
  bool icp = false;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  Json report;
  if (!a.pred.empty() || !a.gt.empty()) {
    if (a.pred.empty() || a.gt.empty()) throw ValidationError("pred/gt", "both trajectories are needed");
    const auto [pred, gt] = metrics::associate(metrics::read_tum(a.pred), metrics::read_tum(a.gt), a.max_dt);
    const auto ate = metrics::ate(pred, gt, a.with_scale);
    const auto rpe = metrics::rpe_sequence(pred, gt);
    report["ate_mean"] = ate.mean;
    report["ate_std"] = ate.std;
    report["rpe_trans_mean"] = rpe.trans_mean;
    report["rpe_trans_std"] = rpe.trans_std;
    report["rpe_rot_mean"] = rpe.rot_mean;
    report["rpe_rot_std"] = rpe.rot_std;
    report["pairs"] = pred.samples.size();
  }
  if (!a.pred_cloud.empty() || !a.gt_cloud.empty()) {
    if (a.pred_cloud.empty() || a.gt_cloud.empty()) {
      throw ValidationError("pred-cloud/gt-cloud", "both clouds are needed");
    }
    auto pred = metrics::read_cloud(a.pred_cloud).points;
    const auto gt = metrics::read_cloud(a.gt_cloud).points;
    if (a.icp) {
      const auto icp = metrics::icp_align(pred, gt);
      for (auto& p : pred) p = icp.transform.apply(p);
      report["icp_iterations"] = icp.iterations;
      report["icp_transform"] = jsonio::to_json(icp.transform);
    }
    const auto c2c = metrics::cloud_to_cloud_rmse(pred, gt);
    report["c2c_rmse"] = c2c.rmse;
    if (!a.heatmap.empty()) metrics::write_heatmap_ply(a.heatmap, pred, c2c.distances);
  }
  if (report.empty()) throw ValidationError("evaluate", "give --pred/--gt and/or --pred-cloud/--gt-cloud");
  emit(report, a.out);
  return 0;
}

// --- fit-friction ------------------------------------------------------------------

std::vector<friction::FrictionSample> read_friction_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::vector<friction::FrictionSample> out;
  std::string line;
  std::size_t line_no = 0;
  int vcol = 0;
  int fcol = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (line_no == 1 && !cells.empty() && !std::isdigit(static_cast<unsigned char>(cells[0][0])) &&
        cells[0][0] != '-' && cells[0][0] != '.') {
      vcol = fcol = -1;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "velocity") vcol = static_cast<int>(i);
        if (cells[i] == "force") fcol = static_cast<int>(i);
      }
      if (vcol < 0 || fcol < 0) throw ParseError(fmt::format("{}:1: header needs velocity and force", path.string()), 1, 1);
      continue;
    }
    if (static_cast<int>(cells.size()) <= std::max(vcol, fcol)) {
      throw ParseError(fmt::format("{}:{}: expected at least {} columns", path.string(), line_no, std::max(vcol, fcol) + 1),
                       line_no, 1);
    }
    try {
      std::size_t used_v = 0;
      std::size_t used_f = 0;
      const double v = std::stod(cells[vcol], &used_v);
      const double f = std::stod(cells[fcol], &used_f);
      if (used_v != cells[vcol].size() || used_f != cells[fcol].size()) throw std::invalid_argument("trailing");
      out.push_back({v, f});
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("{}:{}: not a number", path.string(), line_no), line_no, 1);
    }
  }
  return out;
}

int cmd_fit_friction(const std::string& csv, const std::string& out, const std::string& base) {
  friction::FitOptions opts;
  if (base == "10") {
    opts.base = friction::LogBase::Ten;
  } else if (base != "e") {
    throw ValidationError("log-base", "expected e or 10");
  }
  const auto samples = read_friction_csv(csv);
  const auto fit = friction::fit_friction_params(samples, opts);
  emit({{"a", fit.params.a},
        {"b", fit.params.b},
        {"c", fit.params.c},
        {"C", fit.params.C},
        {"log_base", base},
        {"rmse", fit.rmse},
        {"iterations", fit.iterations},
        {"samples", samples.size()}},
       out);
  return 0;
}

// --- coverage-report ---------------------------------------------------------------

// Replays recorded capsule poses against the rest mesh and reports coverage.
int cmd_coverage_report(const std::string& config_path, const std::string& trajectory, const std::string& out,
                        const std::string& csv_out) {
  const auto config = scenario::load_scenario(config_path);
  const auto data = read_mesh(config.mesh);
  const TriMesh mesh(data.vertices, data.triangles);
  const auto traj = metrics::read_tum(trajectory);
  sensing::CoverageMap map(mesh.vertex_count());
  double reward = 0.0;
  double c_prev = 0.0;
  std::string csv = std::string(sim::kCoverageHeader) + "\n";
  for (const auto& s : traj.samples) {
    map.mark(sensing::visible_vertices(mesh, s.pose, config.camera_rig));
    const double c = sensing::coverage_fraction(map);
    reward += sensing::coverage_reward(c, c_prev, config.coverage.reward_alpha);
    c_prev = c;
    csv += fmt::format("{},{},{},{}\n", s.t, map.covered(), map.total(), c);
  }
  if (!csv_out.empty()) {
    std::ofstream f(csv_out);
    if (!f) throw Error("cannot write " + csv_out);
    f << csv;
  }
  emit({{"poses", traj.samples.size()},
        {"covered", map.covered()},
        {"total", map.total()},
        {"coverage", sensing::coverage_fraction(map)},
        {"reward_sum", reward}},
       out);
  return 0;
}

// --- serve -------------------------------------------------------------------------

struct ServeArgs {
  std::string config;
  std::string bind = "127.0.0.1";
  int port = 8080;
  double duration = 0.0;
  double rate = 0.0;
  double frame_hz = 20.0;
  std::string out = ".";
  bool paused = false;
};

int cmd_serve(const ServeArgs& a) {
  const auto config = scenario::load_scenario(a.config);
  teleop::ServeOptions opts;
  opts.bind = a.bind;
  if (a.port < 0 || a.port > 65535) throw ValidationError("port", "must be in [0, 65535]");
  opts.port = static_cast<unsigned short>(a.port);
  if (a.rate > 0.0) opts.steps_per_second = a.rate;
  opts.frame_hz = a.frame_hz;
  opts.output_dir = a.out;
  opts.start_paused = a.paused;
  fs::create_directories(a.out);
  teleop::Server server(config, opts);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  // Printed so scripts that pass --port 0 can find the server.
  std::cout << fmt::format("listening on {}:{}", a.bind, server.port()) << std::endl;
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.duration);
  while (!g_interrupted && (a.duration <= 0.0 || std::chrono::steady_clock::now() < until)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  server.stop();
  std::cout << fmt::format("command log: {}", server.command_log_path().string()) << std::endl;
  return 0;
}

// --- make-fixtures -----------------------------------------------------------------

Json pose_json(const Vec3& p) { return jsonio::to_json(RigidTransform::from_translation(p)); }

int cmd_make_fixtures(const fs::path& dir) {
  fs::create_directories(dir);
  const auto tube = fixtures::make_tube(0.015, 0.25, 48, 50);
  write_ply(dir / "tube.ply", tube.mesh.vertices(), tube.mesh.triangles());
  write_segments(dir / "tube_segments.json", tube.segments);

  const auto bent = fixtures::make_bent_tube(0.015, 0.08, 0.06, std::numbers::pi / 2.0, 0.08, 40, 25);
  write_ply(dir / "bent_tube.ply", bent.mesh.vertices(), bent.mesh.triangles());
  write_segments(dir / "bent_tube_segments.json", bent.segments);

  const auto stomach = fixtures::make_ellipsoid(0.06, 0.04, 0.05, 24, 32);
  write_ply(dir / "stomach.ply", stomach.vertices(), stomach.triangles());

  arm::save_arm(arm::example_arm(), dir / "arm_7dof.json");
  for (const auto preset : {sensing::RigPreset::Mono, sensing::RigPreset::Stereo, sensing::RigPreset::Dual,
                            sensing::RigPreset::Panoramic}) {
    const auto name = sensing::to_string(preset);
    sensing::save_rig(sensing::CameraRig::preset(preset), dir / fmt::format("rig_{}.json", name));
  }

  // The capsule lies along the tube axis; the magnet sweeps along the tube above it.
  const Json capsule = {{"pose", pose_json(Vec3(0.0, 0.0, 0.05))}};
  const Json scripted = {
      {"mesh", "tube.ply"},
      {"segments", "tube_segments.json"},
      {"capsule", capsule},
      {"magnets", Json::array({{{"moment", {0.0, 0.0, 10.0}}, {"pose", pose_json(Vec3(0.0, 0.12, 0.05))}}})},
      {"script", Json::array({{{"t", 0.0}, {"pose", pose_json(Vec3(0.0, 0.12, 0.05))}},
                              {{"t", 2.0}, {"pose", pose_json(Vec3(0.0, 0.12, 0.15))}}})},
      {"dt", 1e-3},
      {"episode_length", 2.0},
      {"controller", "scripted"},
      {"camera_rig", "dual"},
      {"output", {{"dir", "out_scripted"}}}};
  jsonio::write_file(dir / "scenario_scripted.json", scripted);

  const Json greedy = {{"mesh", "tube.ply"},
                       {"segments", "tube_segments.json"},
                       {"capsule", capsule},
                       {"dt", 1e-3},
                       {"episode_length", 2.0},
                       {"controller", "greedy"},
                       {"camera_rig", "dual"},
                       {"planner", {{"step", 0.005}, {"stop_coverage", 0.9}}},
                       {"output", {{"dir", "out_greedy"}}}};
  jsonio::write_file(dir / "scenario_greedy.json", greedy);

  const Json teleop = {
      {"mesh", "tube.ply"},
      {"segments", "tube_segments.json"},
      {"capsule", capsule},
      {"magnets", Json::array({{{"moment", {0.0, 0.0, 10.0}}, {"pose", pose_json(Vec3(0.0, 0.12, 0.05))}}})},
      {"dt", 1e-3},
      {"episode_length", 60.0},
      {"controller", "teleop"},
      {"output", {{"dir", "out_teleop"}}}};
  jsonio::write_file(dir / "scenario_teleop.json", teleop);

  const Json arm_scenario = {
      {"mesh", "tube.ply"},
      {"segments", "tube_segments.json"},
      {"capsule", capsule},
      {"magnets", Json::array({{{"moment", {0.0, 0.0, 10.0}}, {"arm_mounted", true}}})},
      {"arm", {{"file", "arm_7dof.json"}, {"q", {0.0, -0.3, 0.0, -2.2, 0.0, 2.0, 0.8}}}},
      {"dt", 1e-3},
      {"episode_length", 0.5},
      {"controller", "scripted"},
      {"output", {{"dir", "out_arm"}}}};
  jsonio::write_file(dir / "scenario_arm.json", arm_scenario);

  std::cout << fmt::format("fixtures written to {}", dir.string()) << '\n';
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("capsim");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL
  if (const char* lvl = std::getenv("CAPSIM_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Magnetic capsule endoscope simulator and evaluation toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write its logs");
  simulate->add_option("--config", sim_args.config, "Scenario JSON")->required();
  simulate->add_option("--controller", sim_args.controller, "scripted | greedy | teleop (overrides the scenario)");
  simulate->add_option("--commands", sim_args.commands, "Command log replayed by the teleop controller");
  simulate->add_option("--out", sim_args.out, "Output directory (overrides the scenario)");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Trajectory and point-cloud error metrics");
  evaluate->add_option("--pred", ev.pred, "Estimated trajectory (TUM)");
  evaluate->add_option("--gt", ev.gt, "Ground-truth trajectory (TUM)");
  evaluate->add_option("--max-dt", ev.max_dt, "Timestamp association tolerance, s");
  evaluate->add_flag("--with-scale", ev.with_scale, "Similarity instead of rigid alignment for ATE");
  evaluate->add_option("--pred-cloud", ev.pred_cloud, "Reconstructed cloud (PLY/OBJ)");
  evaluate->add_option("--gt-cloud", ev.gt_cloud, "Reference cloud (PLY/OBJ)");
  evaluate->add_option("--heatmap", ev.heatmap, "Write per-point distances as PLY");
  evaluate->add_flag("--icp", ev.icp, "Register the clouds with ICP first");
  evaluate->add_option("--out", ev.out, "Report path (default stdout)");

  std::string fit_csv;
  std::string fit_out;
  std::string fit_base = "e";
  auto* fit = app.add_subcommand("fit-friction", "Fit the friction curve to velocity/force samples");
  fit->add_option("--csv", fit_csv, "CSV with velocity and force columns")->required();
  fit->add_option("--out", fit_out, "Report path (default stdout)");
  fit->add_option("--log-base", fit_base, "e or 10");

  std::string cov_config;
  std::string cov_traj;
  std::string cov_out;
  std::string cov_csv;
  auto* coverage = app.add_subcommand("coverage-report", "Coverage of a recorded trajectory");
  coverage->add_option("--config", cov_config, "Scenario JSON (mesh and camera rig)")->required();
  coverage->add_option("--trajectory", cov_traj, "Capsule trajectory (TUM)")->required();
  coverage->add_option("--out", cov_out, "Report path (default stdout)");
  coverage->add_option("--csv", cov_csv, "Per-pose coverage CSV");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Live teleoperation over WebSocket");
  serve->add_option("--config", serve_args.config, "Scenario JSON")->required();
  serve->add_option("--bind", serve_args.bind, "Address to listen on");
  serve->add_option("--port", serve_args.port, "TCP port, 0 for any free port");
  serve->add_option("--duration", serve_args.duration, "Stop after this many seconds (default: until interrupted)");
  serve->add_option("--rate", serve_args.rate, "Simulation steps per wall-clock second (default real time)");
  serve->add_option("--frame-hz", serve_args.frame_hz, "State frame broadcast rate");
  serve->add_option("--out", serve_args.out, "Output directory for logs");
  serve->add_flag("--paused", serve_args.paused, "Start paused");

  std::string fixtures_out = "data";
  auto* make = app.add_subcommand("make-fixtures", "Write the bundled meshes, arm, rigs and scenarios");
  make->add_option("--out", fixtures_out, "Directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) return cmd_simulate(sim_args);
    if (*evaluate) return cmd_evaluate(ev);
    if (*fit) return cmd_fit_friction(fit_csv, fit_out, fit_base);
    if (*coverage) return cmd_coverage_report(cov_config, cov_traj, cov_out, cov_csv);
    if (*serve) return cmd_serve(serve_args);
    if (*make) return cmd_make_fixtures(fixtures_out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
