#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsim/geometry.hpp"
#include "capsim/mesh.hpp"

namespace capsim::sensing {

/// Pinhole camera with two-term radial distortion. Camera frame: +z forward,
/// +x right, +y down the image.
struct CameraIntrinsics {
  double fx = 160.0;
  double fy = 160.0;
  double cx = 160.0;
  double cy = 160.0;
  double skew = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  int width = 320;
  int height = 320;
  double fov = 140.0 * 3.14159265358979323846 / 180.0;  // full cone angle, rad
  double max_range = 0.1;                                // m, Euclidean distance from the camera

  void validate() const;
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Nothing for points at or behind the image plane or outside [0, width) x [0, height).
std::optional<Pixel> project(const CameraIntrinsics& intr, const Vec3& p_cam);

struct Camera {
  RigidTransform mount;  // camera frame -> capsule body frame
  CameraIntrinsics intrinsics;
};

enum class RigPreset { Mono, Stereo, Dual, Panoramic };

std::string to_string(RigPreset preset);
RigPreset rig_preset_from_string(const std::string& s);

struct CameraRig {
  std::vector<Camera> cameras;

  /// Mono: one camera at the front tip. Stereo: two front cameras 4 mm apart.
  /// Dual: front and back tips. Panoramic: four side cameras 90 degrees apart.
  static CameraRig preset(RigPreset preset, const CameraIntrinsics& intr = {}, double capsule_length = 0.026,
                          double capsule_radius = 0.0055);
  void validate() const;
};

/// Accepts {"preset": name, "intrinsics": {...}} or {"cameras": [{"mount": pose, "intrinsics": {...}}]}.
CameraRig rig_from_json(const nlohmann::json& j, const std::string& field);
nlohmann::json rig_to_json(const CameraRig& rig);
CameraRig load_rig(const std::filesystem::path& path);
void save_rig(const CameraRig& rig, const std::filesystem::path& path);

/// Bias subtracted from the camera-to-vertex distance in the occlusion ray test, m.
inline constexpr double kOcclusionEpsilon = 1e-4;

/// Whether one camera (world pose given) sees a point: it projects into the
/// image, lies inside the cone and range, and nothing on the mesh is hit
/// before distance - kOcclusionEpsilon along the ray to it.
bool sees(const TriMesh& mesh, const RigidTransform& camera_world, const CameraIntrinsics& intr, const Vec3& point);

/// Sorted ids of the mesh vertices seen by any camera of the rig.
std::vector<std::uint32_t> visible_vertices(const TriMesh& mesh, const RigidTransform& capsule_pose,
                                            const CameraRig& rig);

/// Per-vertex seen flags; flags are only ever set.
class CoverageMap {
 public:
  explicit CoverageMap(std::size_t total = 0) : seen_(total, 0) {}

  /// Marks the ids and returns how many were new.
  std::size_t mark(std::span<const std::uint32_t> ids);
  /// How many of the ids are not yet marked.
  std::size_t count_new(std::span<const std::uint32_t> ids) const;
  bool seen(std::size_t id) const { return seen_[id] != 0; }
  std::size_t covered() const { return covered_; }
  std::size_t total() const { return seen_.size(); }
  void reset();

 private:
  std::vector<std::uint8_t> seen_;
  std::size_t covered_ = 0;
};

/// |seen| / total. DomainError when total is zero.
double coverage_fraction(const CoverageMap& map);

inline constexpr double kDefaultRewardScale = 5.0;

/// alpha (C_t - C_prev). DomainError unless 0 <= C_prev <= C_t <= 1.
double coverage_reward(double c_t, double c_prev, double alpha = kDefaultRewardScale);

// --- Greedy coverage planner ---------------------------------------------

struct PlannerAction {
  std::string name;
  Vec3 translation = Vec3::Zero();  // m, world frame
};

/// +x, -x, +y, -y, +z, -z with the given step length.
std::vector<PlannerAction> axis_actions(double step = 0.005);

struct PlanChoice {
  std::size_t action = 0;
  std::size_t new_vertices = 0;
  RigidTransform pose;  // pose after the action; unchanged when the move was blocked
  bool blocked = false;
  std::vector<std::uint32_t> visible;  // seen from the resulting pose
};

/// One-step lookahead: applies every action to a copy of the capsule pose,
/// counts vertices not yet covered, and returns the argmax (first on ties).
/// A move that would bring the capsule axis closer than capsule_radius to the
/// wall is blocked and the capsule stays where it is.
PlanChoice greedy_plan_step(const RigidTransform& capsule_pose, double capsule_radius, double capsule_half_axis,
                            const TriMesh& mesh, const CameraRig& rig, const CoverageMap& coverage,
                            std::span<const PlannerAction> actions);

}  // namespace capsim::sensing
