#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "capsim/arm.hpp"
#include "capsim/dynamics.hpp"
#include "capsim/json_io.hpp"
#include "capsim/scenario.hpp"
#include "capsim/sensing.hpp"

namespace capsim::sim {

// --- Commands ------------------------------------------------------------------

enum class CommandKind { MagnetDelta, SetMagnetPose, Pause, Resume, Reset, SetRate, Stop };

std::string to_string(CommandKind kind);

struct Command {
  CommandKind kind = CommandKind::Pause;
  std::size_t magnet = 0;
  Vec3 translation = Vec3::Zero();  // magnet_delta: dx, dy, dz (m, world frame)
  Vec3 rpy = Vec3::Zero();          // magnet_delta: droll, dpitch, dyaw (rad, world axes)
  RigidTransform pose;              // set_magnet_pose
  double hz = 0.0;                  // set_rate: simulation steps per wall-clock second
};

struct CommandLimits {
  double max_translation = 0.005;  // m, Euclidean length of (dx, dy, dz)
  double max_rotation = 0.1;       // rad, per angle
};

/// Wire form: {"type": "cmd", "cmd": "<kind>", ...fields}. "type" is optional
/// here. ValidationError for anything malformed.
Command parse_command(const jsonio::Json& j);
jsonio::Json command_to_json(const Command& cmd);

struct LoggedCommand {
  std::uint64_t step = 0;  // steps completed in the current episode when the command was applied
  Command cmd;
};

/// One JSON object per line: {"step": k, "cmd": {...}}.
std::string command_log_line(const LoggedCommand& entry);
std::vector<LoggedCommand> read_command_log(const std::filesystem::path& path);

struct CommandOutcome {
  bool accepted = true;
  std::string reason;  // why it was rejected
};

// --- Simulation --------------------------------------------------------------

struct StepOutcome {
  dynamics::StepReport report;
  bool coverage_updated = false;
};

/// A scenario brought to life: organ, capsule, magnets, optional arm, and the
/// coverage record. Not thread-safe; one owner steps it.
class Simulation {
 public:
  explicit Simulation(scenario::ScenarioConfig config);

  const scenario::ScenarioConfig& config() const { return config_; }
  const dynamics::World& world() const { return world_; }
  const dynamics::CapsuleState& capsule() const { return capsule_; }
  double time() const { return world_.t; }
  std::uint64_t steps() const { return world_.step_count; }
  bool finished() const { return steps() >= config_.step_count(); }

  const sensing::CoverageMap& coverage() const { return coverage_; }
  double coverage_fraction() const { return sensing::coverage_fraction(coverage_); }
  double initial_coverage() const { return initial_coverage_; }

  std::size_t magnet_count() const { return magnet_poses_.size(); }
  const RigidTransform& magnet_pose(std::size_t i) const { return magnet_poses_.at(i); }
  const std::optional<arm::ArmModel>& arm_model() const { return arm_; }
  const arm::JointVector& arm_q() const { return q_; }
  const dynamics::StepReport& last_report() const { return last_report_; }

  /// Back to the configured initial state with an empty coverage record (C = 0).
  void reset();

  /// One physics step; visibility is evaluated every coverage.interval_steps steps.
  StepOutcome step();

  /// One kinematic planner move (greedy controller): the capsule jumps to the
  /// chosen pose, the wall advances without contact, coverage is updated.
  StepOutcome greedy_step();

  /// Evaluates visibility from the current capsule pose; returns the new count.
  std::size_t update_coverage();

  /// Moves magnet i to pose. Arm-mounted magnets go through inverse kinematics
  /// and end up at FK of the solution. Throws UnreachableError.
  void move_magnet(std::size_t i, const RigidTransform& pose);

  /// Applies magnet and reset commands. Pause, resume, set_rate and stop only
  /// concern a live session and are accepted without effect here.
  CommandOutcome apply(const Command& cmd, const CommandLimits& limits = {});

  /// Poses magnet 0 along the scripted waypoints for the current time.
  void follow_script();

 private:
  void sync_magnets();

  scenario::ScenarioConfig config_;
  std::optional<tissue::Organ> organ0_;  // the organ as loaded, restored on reset
  std::optional<arm::ArmModel> arm_;
  dynamics::World world_;
  dynamics::CapsuleState capsule_;
  std::vector<RigidTransform> magnet_poses_;
  arm::JointVector q_ = arm::JointVector::Zero();
  sensing::CoverageMap coverage_;
  double initial_coverage_ = 0.0;
  dynamics::StepReport last_report_;
  std::vector<sensing::PlannerAction> actions_;
};

jsonio::Json report_to_json(const dynamics::StepReport& r);

// --- Run outputs -----------------------------------------------------------------

/// Writes the trajectory log, coverage CSV, step-report JSONL and, when
/// noise.sigma > 0, a noisy copy of the trajectory seeded from the scenario.
class RunWriter {
 public:
  RunWriter(const scenario::ScenarioConfig& config, const std::filesystem::path& dir);

  void record(const Simulation& sim, const StepOutcome& outcome);
  /// Truncates every output (a reset starts a fresh episode).
  void restart();
  void flush();

  const std::filesystem::path& trajectory_path() const { return trajectory_path_; }
  const std::filesystem::path& coverage_path() const { return coverage_path_; }
  const std::filesystem::path& reports_path() const { return reports_path_; }
  std::optional<std::filesystem::path> noisy_path() const;
  /// Coverage CSV written so far, header included.
  const std::string& coverage_csv() const { return coverage_csv_; }

 private:
  void open();

  std::filesystem::path trajectory_path_;
  std::filesystem::path coverage_path_;
  std::filesystem::path reports_path_;
  std::filesystem::path noisy_path_;
  double sigma_ = 0.0;
  std::uint64_t seed_ = 0;
  std::mt19937_64 rng_;
  std::ofstream trajectory_;
  std::ofstream coverage_;
  std::ofstream reports_;
  std::ofstream noisy_;
  std::string coverage_csv_;
};

/// Applies a command the way both live sessions and replays do: a reset also
/// restarts the outputs.
CommandOutcome apply_command(Simulation& sim, RunWriter& writer, const Command& cmd, const CommandLimits& limits = {});

inline constexpr const char* kCoverageHeader = "t,covered_count,total,C";

struct RunOptions {
  std::optional<scenario::ControllerKind> controller;  // overrides the scenario
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> commands;
};

struct RunRecord {
  std::string config_hash;
  std::filesystem::path trajectory;
  std::filesystem::path coverage;
  std::filesystem::path reports;
  std::optional<std::filesystem::path> noisy_trajectory;
  std::uint64_t steps = 0;
  double final_coverage = 0.0;
  double reward_sum = 0.0;
  double wall_seconds = 0.0;
};

jsonio::Json to_json(const RunRecord& record);

/// Steps a fresh Simulation for the episode under the chosen controller and
/// writes the outputs. Errors from the physics propagate.
RunRecord run_simulation(const scenario::ScenarioConfig& config, const RunOptions& options = {});

}  // namespace capsim::sim
