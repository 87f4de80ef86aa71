#include "capsim/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "capsim/errors.hpp"
#include "capsim/mesh_io.hpp"
#include "capsim/metrics.hpp"

namespace capsim::sim {
namespace {

using jsonio::Json;
using jsonio::ObjectReader;

Json vec(const Vec3& v) { return jsonio::to_json(v); }

}  // namespace

// --- Commands ------------------------------------------------------------------

std::string to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::MagnetDelta: return "magnet_delta";
    case CommandKind::SetMagnetPose: return "set_magnet_pose";
    case CommandKind::Pause: return "pause";
    case CommandKind::Resume: return "resume";
    case CommandKind::Reset: return "reset";
    case CommandKind::SetRate: return "set_rate";
    case CommandKind::Stop: return "stop";
  }
  return "?";
}

Command parse_command(const Json& j) {
  ObjectReader r(j, "");
  if (r.has("type") && r.get<std::string>("type", "") != "cmd") {
    throw ValidationError("type", "expected \"cmd\"");
  }
  const auto name = r.required<std::string>("cmd");
  Command c;
  c.magnet = r.get<std::size_t>("magnet", 0);
  if (name == "magnet_delta") {
    c.kind = CommandKind::MagnetDelta;
    c.translation = Vec3(r.get("dx", 0.0), r.get("dy", 0.0), r.get("dz", 0.0));
    c.rpy = Vec3(r.get("droll", 0.0), r.get("dpitch", 0.0), r.get("dyaw", 0.0));
    if (!c.translation.allFinite() || !c.rpy.allFinite()) throw ValidationError("magnet_delta", "values must be finite");
  } else if (name == "set_magnet_pose") {
    c.kind = CommandKind::SetMagnetPose;
    if (!r.has("pose")) throw ValidationError("pose", "is required");
    c.pose = r.pose("pose", {});
  } else if (name == "pause") {
    c.kind = CommandKind::Pause;
  } else if (name == "resume") {
    c.kind = CommandKind::Resume;
  } else if (name == "reset") {
    c.kind = CommandKind::Reset;
  } else if (name == "set_rate") {
    c.kind = CommandKind::SetRate;
    c.hz = r.required<double>("hz");
    if (!(c.hz > 0.0) || !std::isfinite(c.hz)) throw ValidationError("hz", "must be a finite number > 0");
  } else if (name == "stop") {
    c.kind = CommandKind::Stop;
  } else {
    throw ValidationError("cmd", "unknown command \"" + name + "\"");
  }
  r.finish();
  return c;
}

Json command_to_json(const Command& c) {
  Json j = {{"cmd", to_string(c.kind)}};
  switch (c.kind) {
    case CommandKind::MagnetDelta:
      j["magnet"] = c.magnet;
      j["dx"] = c.translation.x();
      j["dy"] = c.translation.y();
      j["dz"] = c.translation.z();
      j["droll"] = c.rpy.x();
      j["dpitch"] = c.rpy.y();
      j["dyaw"] = c.rpy.z();
      break;
    case CommandKind::SetMagnetPose:
      j["magnet"] = c.magnet;
      j["pose"] = jsonio::to_json(c.pose);
      break;
    case CommandKind::SetRate:
      j["hz"] = c.hz;
      break;
    default:
      break;
  }
  return j;
}

std::string command_log_line(const LoggedCommand& entry) {
  return Json{{"step", entry.step}, {"cmd", command_to_json(entry.cmd)}}.dump();
}

std::vector<LoggedCommand> read_command_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::vector<LoggedCommand> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Json j = jsonio::parse(line, fmt::format("{} line {}", path.string(), line_no));
    ObjectReader r(j, fmt::format("line {}", line_no));
    LoggedCommand e;
    e.step = r.required<std::uint64_t>("step");
    if (!r.has("cmd")) throw ValidationError(r.field("cmd"), "is required");
    e.cmd = parse_command(r.at("cmd"));
    r.finish();
    out.push_back(e);
  }
  return out;
}

// --- Simulation --------------------------------------------------------------

Simulation::Simulation(scenario::ScenarioConfig config) : config_(std::move(config)) {
  config_.validate();
  const MeshData data = read_mesh(config_.mesh);
  std::vector<CenterlineSegment> segments;
  if (!config_.segments.empty()) segments = read_segments(config_.segments);
  organ0_.emplace(TriMesh(data.vertices, data.triangles), std::move(segments), config_.tissue, config_.peristalsis,
                  config_.mmc_schedule);

  std::size_t mounted = 0;
  for (const auto& m : config_.magnets) mounted += m.arm_mounted ? 1 : 0;
  if (mounted > 1) throw ValidationError("magnets", "at most one magnet can ride on the arm");
  if (config_.arm) {
    arm_ = config_.arm->file.empty() ? arm::example_arm() : arm::load_arm(config_.arm->file);
    if (!arm_->within_limits(config_.arm->q)) throw ValidationError("arm.q", "outside the joint limits");
  }
  actions_ = sensing::axis_actions(config_.planner.step);
  reset();
}

void Simulation::reset() {
  world_ = dynamics::World{};
  world_.organ = *organ0_;
  world_.friction = config_.friction;
  world_.params = config_.dynamics;
  capsule_ = config_.capsule;
  if (arm_) q_ = config_.arm->q;
  magnet_poses_.clear();
  for (const auto& m : config_.magnets) {
    magnet_poses_.push_back(m.arm_mounted ? arm::forward_kinematics(*arm_, q_) : m.pose);
  }
  sync_magnets();
  coverage_ = sensing::CoverageMap(world_.organ->mesh().vertex_count());
  initial_coverage_ = 0.0;
  last_report_ = {};
}

void Simulation::sync_magnets() {
  world_.magnets.clear();
  for (std::size_t i = 0; i < magnet_poses_.size(); ++i) {
    world_.magnets.push_back({magnet_poses_[i].rotate(config_.magnets[i].moment), magnet_poses_[i].translation()});
  }
}

std::size_t Simulation::update_coverage() {
  const auto ids = sensing::visible_vertices(world_.organ->mesh(), capsule_.pose, config_.camera_rig);
  return coverage_.mark(ids);
}

StepOutcome Simulation::step() {
  auto [next, report] = dynamics::step(capsule_, world_, config_.dt);
  capsule_ = next;
  last_report_ = report;
  StepOutcome out{report, false};
  if (world_.step_count % static_cast<std::uint64_t>(config_.coverage.interval_steps) == 0) {
    update_coverage();
    out.coverage_updated = true;
  }
  return out;
}

StepOutcome Simulation::greedy_step() {
  const auto choice = sensing::greedy_plan_step(capsule_.pose, capsule_.radius, capsule_.half_axis(),
                                                world_.organ->mesh(), config_.camera_rig, coverage_, actions_);
  capsule_.pose = choice.pose;
  capsule_.velocity.setZero();
  capsule_.angular_velocity.setZero();
  world_.organ->step({}, world_.t, config_.dt);
  world_.t += config_.dt;
  world_.step_count += 1;
  coverage_.mark(choice.visible);
  last_report_ = {};
  last_report_.t = world_.t;
  last_report_.step = world_.step_count;
  return {last_report_, true};
}

void Simulation::move_magnet(std::size_t i, const RigidTransform& pose) {
  if (i >= magnet_poses_.size()) throw DomainError(fmt::format("no magnet {}", i));
  if (config_.magnets[i].arm_mounted) {
    const auto ik = arm::inverse_kinematics(*arm_, pose, q_);
    q_ = ik.q;
    magnet_poses_[i] = arm::forward_kinematics(*arm_, q_);
  } else {
    magnet_poses_[i] = pose;
  }
  sync_magnets();
}

CommandOutcome Simulation::apply(const Command& cmd, const CommandLimits& limits) {
  switch (cmd.kind) {
    case CommandKind::MagnetDelta:
    case CommandKind::SetMagnetPose: {
      if (cmd.magnet >= magnet_poses_.size()) return {false, fmt::format("no magnet {}", cmd.magnet)};
      RigidTransform target = cmd.pose;
      if (cmd.kind == CommandKind::MagnetDelta) {
        const double len = cmd.translation.norm();
        if (len > limits.max_translation) {
          return {false, fmt::format("clamp: translation {:.4g} m exceeds the {:.4g} m per-message limit", len,
                                     limits.max_translation)};
        }
        const double rot = cmd.rpy.cwiseAbs().maxCoeff();
        if (rot > limits.max_rotation) {
          return {false, fmt::format("clamp: rotation {:.4g} rad exceeds the {:.4g} rad per-message limit", rot,
                                     limits.max_rotation)};
        }
        const auto& cur = magnet_poses_[cmd.magnet];
        target = RigidTransform(quat_from_rpy(cmd.rpy.x(), cmd.rpy.y(), cmd.rpy.z()) * cur.rotation(),
                                cur.translation() + cmd.translation);
      }
      try {
        move_magnet(cmd.magnet, target);
      } catch (const UnreachableError& e) {
        return {false, fmt::format("unreachable: {}", e.what())};
      }
      return {};
    }
    case CommandKind::Reset:
      reset();
      return {};
    case CommandKind::Pause:
    case CommandKind::Resume:
    case CommandKind::SetRate:
    case CommandKind::Stop:
      return {};
  }
  return {};
}

void Simulation::follow_script() {
  const auto& wps = config_.script;
  if (wps.empty() || magnet_poses_.empty()) return;
  const double t = time();
  RigidTransform pose;
  if (t <= wps.front().t) {
    pose = wps.front().pose;
  } else if (t >= wps.back().t) {
    pose = wps.back().pose;
  } else {
    std::size_t k = 1;
    while (wps[k].t < t) ++k;
    const auto& a = wps[k - 1];
    const auto& b = wps[k];
    const double s = (t - a.t) / (b.t - a.t);
    pose = RigidTransform(a.pose.rotation().slerp(s, b.pose.rotation()),
                          (1.0 - s) * a.pose.translation() + s * b.pose.translation());
  }
  move_magnet(0, pose);
}

Json report_to_json(const dynamics::StepReport& r) {
  return {{"t", r.t},
          {"step", r.step},
          {"net_force", vec(r.net_force)},
          {"net_torque", vec(r.net_torque)},
          {"contact", r.contact},
          {"penetration", r.penetration},
          {"breakdown",
           {{"magnetic", vec(r.breakdown.magnetic)},
            {"friction", vec(r.breakdown.friction)},
            {"peristalsis", vec(r.breakdown.peristalsis)},
            {"contact", vec(r.breakdown.contact)},
            {"gravity", vec(r.breakdown.gravity)}}}};
}

// --- RunWriter ---------------------------------------------------------------

RunWriter::RunWriter(const scenario::ScenarioConfig& config, const std::filesystem::path& dir)
    : trajectory_path_(dir / config.output.trajectory),
      coverage_path_(dir / config.output.coverage),
      reports_path_(dir / config.output.reports),
      noisy_path_(dir / config.output.noisy_trajectory),
      sigma_(config.noise.sigma),
      seed_(config.seed) {
  std::filesystem::create_directories(dir);
  open();
}

void RunWriter::open() {
  const auto open_one = [](std::ofstream& f, const std::filesystem::path& p) {
    if (f.is_open()) f.close();
    f.open(p, std::ios::out | std::ios::trunc);
    if (!f) throw Error("cannot write " + p.string());
  };
  open_one(trajectory_, trajectory_path_);
  open_one(coverage_, coverage_path_);
  open_one(reports_, reports_path_);
  if (sigma_ > 0.0) open_one(noisy_, noisy_path_);
  rng_.seed(seed_);
  coverage_csv_ = std::string(kCoverageHeader) + "\n";
  coverage_ << coverage_csv_;
}

void RunWriter::restart() { open(); }

void RunWriter::record(const Simulation& sim, const StepOutcome& outcome) {
  const metrics::PoseSample sample{sim.time(), sim.capsule().pose};
  trajectory_ << metrics::format_tum_line(sample) << '\n';
  reports_ << report_to_json(outcome.report).dump() << '\n';
  if (outcome.coverage_updated) {
    const std::string row = fmt::format("{},{},{},{}\n", sim.time(), sim.coverage().covered(), sim.coverage().total(),
                                        sim.coverage_fraction());
    coverage_ << row;
    coverage_csv_ += row;
  }
  if (sigma_ > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma_);
    Vec3 offset;
    for (int i = 0; i < 3; ++i) offset[i] = noise(rng_);
    const metrics::PoseSample noisy{sample.t,
                                    RigidTransform(sample.pose.rotation(), sample.pose.translation() + offset)};
    noisy_ << metrics::format_tum_line(noisy) << '\n';
  }
}

void RunWriter::flush() {
  trajectory_.flush();
  coverage_.flush();
  reports_.flush();
  if (noisy_.is_open()) noisy_.flush();
}

std::optional<std::filesystem::path> RunWriter::noisy_path() const {
  if (sigma_ > 0.0) return noisy_path_;
  return std::nullopt;
}

CommandOutcome apply_command(Simulation& sim, RunWriter& writer, const Command& cmd, const CommandLimits& limits) {
  const CommandOutcome out = sim.apply(cmd, limits);
  if (cmd.kind == CommandKind::Reset) writer.restart();
  return out;
}

// --- run_simulation ------------------------------------------------------------

Json to_json(const RunRecord& r) {
  Json j = {{"config_hash", r.config_hash},
            {"trajectory", r.trajectory.string()},
            {"coverage", r.coverage.string()},
            {"reports", r.reports.string()},
            {"steps", r.steps},
            {"final_coverage", r.final_coverage},
            {"reward_sum", r.reward_sum},
            {"wall_seconds", r.wall_seconds}};
  if (r.noisy_trajectory) j["noisy_trajectory"] = r.noisy_trajectory->string();
  return j;
}

RunRecord run_simulation(const scenario::ScenarioConfig& config, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Simulation sim(config);
  const auto controller = options.controller.value_or(config.controller);
  RunWriter writer(config, options.output_dir.value_or(config.output.dir));
  const std::uint64_t n = config.step_count();
  const double alpha = config.coverage.reward_alpha;

  double reward = 0.0;
  double c_prev = sim.coverage_fraction();
  const auto record = [&](const StepOutcome& o) {
    writer.record(sim, o);
    if (o.coverage_updated) {
      const double c = sim.coverage_fraction();
      reward += sensing::coverage_reward(c, c_prev, alpha);
      c_prev = c;
    }
  };

  spdlog::info("run: controller {}, {} steps, config {}", scenario::to_string(controller), n,
               scenario::config_hash_hex(config));
  switch (controller) {
    case scenario::ControllerKind::Scripted:
      while (sim.steps() < n) {
        sim.follow_script();
        record(sim.step());
      }
      break;
    case scenario::ControllerKind::Greedy:
      while (sim.steps() < n && sim.coverage_fraction() < config.planner.stop_coverage) record(sim.greedy_step());
      break;
    case scenario::ControllerKind::Teleop: {
      const auto path = options.commands.value_or(config.commands);
      if (path.empty()) throw ValidationError("commands", "a teleop run needs a command log");
      const auto log = read_command_log(path);
      std::size_t i = 0;
      bool stopped = false;
      while (true) {
        while (i < log.size() && log[i].step <= sim.steps()) {
          if (log[i].step < sim.steps()) {
            throw ValidationError("commands", fmt::format("entry {} is for step {} but the run is at step {}", i + 1,
                                                          log[i].step, sim.steps()));
          }
          if (log[i].cmd.kind == CommandKind::Stop) {
            stopped = true;
            break;
          }
          const auto outcome = apply_command(sim, writer, log[i].cmd);
          if (log[i].cmd.kind == CommandKind::Reset) {
            reward = 0.0;
            c_prev = sim.coverage_fraction();
          }
          if (!outcome.accepted) spdlog::debug("replay: command {} rejected: {}", i + 1, outcome.reason);
          ++i;
        }
        if (stopped || sim.steps() >= n) break;
        record(sim.step());
      }
      break;
    }
  }
  writer.flush();

  RunRecord rec;
  rec.config_hash = scenario::config_hash_hex(config);
  rec.trajectory = writer.trajectory_path();
  rec.coverage = writer.coverage_path();
  rec.reports = writer.reports_path();
  rec.noisy_trajectory = writer.noisy_path();
  rec.steps = sim.steps();
  rec.final_coverage = sim.coverage_fraction();
  rec.reward_sum = reward;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace capsim::sim
