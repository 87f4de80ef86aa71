#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capsim/arm.hpp"
#include "capsim/dynamics.hpp"
#include "capsim/friction.hpp"
#include "capsim/json_io.hpp"
#include "capsim/sensing.hpp"
#include "capsim/tissue.hpp"

namespace capsim::scenario {

struct MagnetConfig {
  Vec3 moment = Vec3(0.0, 0.0, 10.0);  // A*m^2, magnet body frame
  RigidTransform pose = RigidTransform::from_translation(Vec3(0.0, 0.0, 0.15));
  bool arm_mounted = false;  // pose comes from the arm's forward kinematics
};

struct ArmConfig {
  std::filesystem::path file;  // empty: built-in example table
  arm::JointVector q = arm::JointVector::Zero();
};

struct Waypoint {
  double t = 0.0;
  RigidTransform pose;
};

enum class ControllerKind { Scripted, Greedy, Teleop };

std::string to_string(ControllerKind kind);
ControllerKind controller_from_string(const std::string& s);

struct CoverageConfig {
  int interval_steps = 10;  // physics controllers evaluate visibility every this many steps
  double reward_alpha = sensing::kDefaultRewardScale;
};

struct PlannerConfig {
  double step = 0.005;               // m
  double stop_coverage = 1.0;        // greedy episodes end once C reaches this
};

struct NoiseConfig {
  double sigma = 0.0;  // m; > 0 writes a noisy copy of the trajectory
};

struct OutputConfig {
  std::filesystem::path dir = ".";
  std::string trajectory = "trajectory.txt";
  std::string coverage = "coverage.csv";
  std::string reports = "reports.jsonl";
  std::string noisy_trajectory = "trajectory_noisy.txt";
};

/// Every knob of a run. Relative file paths are resolved against the directory
/// of the scenario file at load time.
struct ScenarioConfig {
  std::filesystem::path mesh;
  std::filesystem::path segments;  // empty: no centerline (no peristalsis force)
  dynamics::CapsuleState capsule = dynamics::CapsuleState::make();
  std::vector<MagnetConfig> magnets;
  std::optional<ArmConfig> arm;
  friction::FrictionParams friction;
  tissue::DeformationParams tissue;
  tissue::PeristalsisParams peristalsis;
  tissue::MmcSchedule mmc_schedule = tissue::MmcSchedule::default_schedule();
  sensing::CameraRig camera_rig = sensing::CameraRig::preset(sensing::RigPreset::Dual);
  dynamics::DynamicsParams dynamics;
  double dt = 1e-3;
  double episode_length = 1.0;  // s
  std::uint64_t seed = 0;
  ControllerKind controller = ControllerKind::Scripted;
  std::vector<Waypoint> script;  // drives magnet 0 in scripted runs
  std::filesystem::path commands;  // command log replayed by teleop runs
  CoverageConfig coverage;
  PlannerConfig planner;
  NoiseConfig noise;
  OutputConfig output;

  std::uint64_t step_count() const;
  /// ValidationError naming the first bad field; MissingFileError for absent files.
  void validate() const;
};

ScenarioConfig load_scenario(const std::filesystem::path& path);
/// `base_dir` resolves relative paths.
ScenarioConfig scenario_from_json(const jsonio::Json& j, const std::filesystem::path& base_dir);
jsonio::Json to_json(const ScenarioConfig& config);
void save_scenario(const ScenarioConfig& config, const std::filesystem::path& path);

/// FNV-1a over the canonical (key-sorted, defaults filled) JSON form.
std::uint64_t config_hash(const ScenarioConfig& config);
std::string config_hash_hex(const ScenarioConfig& config);

}  // namespace capsim::scenario
