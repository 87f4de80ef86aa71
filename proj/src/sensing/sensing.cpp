#include "capsim/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "capsim/errors.hpp"
#include "capsim/json_io.hpp"

namespace capsim::sensing {
namespace {

// Camera looking along body direction `forward` with image "up" opposite to `down`.
RigidTransform mount_looking(const Vec3& position, const Vec3& forward, const Vec3& down) {
  const Vec3 z = forward.normalized();
  const Vec3 y = (down - down.dot(z) * z).normalized();
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {Quat(r), position};
}

bool axis_clear(const TriMesh& mesh, const RigidTransform& pose, double radius, double half_axis) {
  const Vec3 axis = pose.rotate(Vec3::UnitZ());
  constexpr int kSamples = 9;
  for (int k = 0; k < kSamples; ++k) {
    const Vec3 p = pose.translation() + (-half_axis + 2.0 * half_axis * k / (kSamples - 1)) * axis;
    if (closest_point(mesh, p).distance < radius) return false;
  }
  return true;
}

CameraIntrinsics intrinsics_from(const jsonio::Json& j, const std::string& path) {
  jsonio::ObjectReader r(j, path);
  CameraIntrinsics c;
  c.fx = r.get("fx", c.fx);
  c.fy = r.get("fy", c.fy);
  c.cx = r.get("cx", c.cx);
  c.cy = r.get("cy", c.cy);
  c.skew = r.get("skew", c.skew);
  c.k1 = r.get("k1", c.k1);
  c.k2 = r.get("k2", c.k2);
  c.width = r.get("width", c.width);
  c.height = r.get("height", c.height);
  c.fov = r.get("fov", c.fov);
  c.max_range = r.get("max_range", c.max_range);
  r.finish();
  return c;
}

jsonio::Json intrinsics_to_json(const CameraIntrinsics& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"skew", c.skew}, {"k1", c.k1},
          {"k2", c.k2}, {"width", c.width}, {"height", c.height}, {"fov", c.fov}, {"max_range", c.max_range}};
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0)) throw ValidationError("intrinsics.fx", "must be > 0");
  if (!(fy > 0.0)) throw ValidationError("intrinsics.fy", "must be > 0");
  if (width <= 0 || height <= 0) throw ValidationError("intrinsics.width", "image size must be > 0");
  if (!(fov > 0.0 && fov < std::numbers::pi)) throw ValidationError("intrinsics.fov", "must lie in (0, pi)");
  if (!(max_range > 0.0)) throw ValidationError("intrinsics.max_range", "must be > 0");
  for (double v : {cx, cy, skew, k1, k2}) {
    if (!std::isfinite(v)) throw ValidationError("intrinsics", "values must be finite");
  }
}

std::optional<Pixel> project(const CameraIntrinsics& intr, const Vec3& p_cam) {
  if (!(p_cam.z() > 0.0)) return std::nullopt;
  const double x = p_cam.x() / p_cam.z();
  const double y = p_cam.y() / p_cam.z();
  const double r2 = x * x + y * y;
  const double scale = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
  const double xd = x * scale;
  const double yd = y * scale;
  const Pixel px{intr.fx * xd + intr.skew * yd + intr.cx, intr.fy * yd + intr.cy};
  if (px.u < 0.0 || px.u >= intr.width || px.v < 0.0 || px.v >= intr.height) return std::nullopt;
  return px;
}

std::string to_string(RigPreset preset) {
  switch (preset) {
    case RigPreset::Mono: return "mono";
    case RigPreset::Stereo: return "stereo";
    case RigPreset::Dual: return "dual";
    case RigPreset::Panoramic: return "panoramic";
  }
  return "?";
}

RigPreset rig_preset_from_string(const std::string& s) {
  if (s == "mono") return RigPreset::Mono;
  if (s == "stereo") return RigPreset::Stereo;
  if (s == "dual") return RigPreset::Dual;
  if (s == "panoramic") return RigPreset::Panoramic;
  throw ValidationError("preset", "unknown rig preset \"" + s + "\"");
}

CameraRig CameraRig::preset(RigPreset preset, const CameraIntrinsics& intr, double capsule_length,
                            double capsule_radius) {
  const double tip = 0.5 * capsule_length;
  CameraRig rig;
  switch (preset) {
    case RigPreset::Mono:
      rig.cameras.push_back({mount_looking({0, 0, tip}, Vec3::UnitZ(), Vec3::UnitY()), intr});
      break;
    case RigPreset::Stereo:
      rig.cameras.push_back({mount_looking({-0.002, 0, tip}, Vec3::UnitZ(), Vec3::UnitY()), intr});
      rig.cameras.push_back({mount_looking({0.002, 0, tip}, Vec3::UnitZ(), Vec3::UnitY()), intr});
      break;
    case RigPreset::Dual:
      rig.cameras.push_back({mount_looking({0, 0, tip}, Vec3::UnitZ(), Vec3::UnitY()), intr});
      rig.cameras.push_back({mount_looking({0, 0, -tip}, -Vec3::UnitZ(), Vec3::UnitY()), intr});
      break;
    case RigPreset::Panoramic:
      for (int k = 0; k < 4; ++k) {
        const double phi = k * std::numbers::pi / 2.0;
        const Vec3 out(std::cos(phi), std::sin(phi), 0.0);
        rig.cameras.push_back({mount_looking(capsule_radius * out, out, -Vec3::UnitZ()), intr});
      }
      break;
  }
  return rig;
}

void CameraRig::validate() const {
  if (cameras.empty()) throw ValidationError("rig.cameras", "needs at least one camera");
  for (const auto& c : cameras) c.intrinsics.validate();
}

CameraRig rig_from_json(const jsonio::Json& j, const std::string& field) {
  jsonio::ObjectReader r(j, field);
  CameraRig rig;
  if (r.has("preset")) {
    if (r.has("cameras")) throw ValidationError(r.field("preset"), "give either preset or cameras, not both");
    const auto preset = rig_preset_from_string(r.get<std::string>("preset", ""));
    const CameraIntrinsics intr = r.has("intrinsics") ? intrinsics_from(r.at("intrinsics"), r.field("intrinsics"))
                                                      : CameraIntrinsics{};
    rig = CameraRig::preset(preset, intr, r.get("capsule_length", 0.026), r.get("capsule_radius", 0.0055));
  } else {
    if (!r.has("cameras") || !r.at("cameras").is_array()) {
      throw ValidationError(r.field("cameras"), "expected an array");
    }
    const auto& cams = r.at("cameras");
    for (std::size_t i = 0; i < cams.size(); ++i) {
      jsonio::ObjectReader c(cams[i], r.field(fmt::format("cameras[{}]", i)));
      Camera cam;
      cam.mount = c.pose("mount", {});
      if (c.has("intrinsics")) cam.intrinsics = intrinsics_from(c.at("intrinsics"), c.field("intrinsics"));
      c.finish();
      rig.cameras.push_back(cam);
    }
  }
  r.finish();
  rig.validate();
  return rig;
}

jsonio::Json rig_to_json(const CameraRig& rig) {
  jsonio::Json cams = jsonio::Json::array();
  for (const auto& c : rig.cameras) {
    cams.push_back({{"mount", jsonio::to_json(c.mount)}, {"intrinsics", intrinsics_to_json(c.intrinsics)}});
  }
  return {{"cameras", cams}};
}

CameraRig load_rig(const std::filesystem::path& path) { return rig_from_json(jsonio::read_file(path), ""); }

void save_rig(const CameraRig& rig, const std::filesystem::path& path) { jsonio::write_file(path, rig_to_json(rig)); }

bool sees(const TriMesh& mesh, const RigidTransform& camera_world, const CameraIntrinsics& intr, const Vec3& point) {
  const Vec3 p_cam = camera_world.inverse().apply(point);
  const double range = p_cam.norm();
  if (!(range > kOcclusionEpsilon) || range > intr.max_range) return false;
  if (p_cam.z() < range * std::cos(0.5 * intr.fov)) return false;
  if (!project(intr, p_cam)) return false;
  const Vec3 origin = camera_world.translation();
  const Vec3 dir = (point - origin) / range;
  return !ray_cast(mesh, origin, dir, range - kOcclusionEpsilon).has_value();
}

std::vector<std::uint32_t> visible_vertices(const TriMesh& mesh, const RigidTransform& capsule_pose,
                                            const CameraRig& rig) {
  const auto& verts = mesh.vertices();
  std::vector<std::uint8_t> flag(verts.size(), 0);
  for (const auto& cam : rig.cameras) {
    const RigidTransform world = capsule_pose * cam.mount;
    for (std::size_t v = 0; v < verts.size(); ++v) {
      if (!flag[v] && sees(mesh, world, cam.intrinsics, verts[v])) flag[v] = 1;
    }
  }
  std::vector<std::uint32_t> ids;
  for (std::size_t v = 0; v < flag.size(); ++v) {
    if (flag[v]) ids.push_back(static_cast<std::uint32_t>(v));
  }
  return ids;
}

std::size_t CoverageMap::mark(std::span<const std::uint32_t> ids) {
  std::size_t fresh = 0;
  for (auto id : ids) {
    if (id >= seen_.size()) throw DimensionError(fmt::format("coverage: vertex id {} out of range", id));
    if (!seen_[id]) {
      seen_[id] = 1;
      ++fresh;
    }
  }
  covered_ += fresh;
  return fresh;
}

std::size_t CoverageMap::count_new(std::span<const std::uint32_t> ids) const {
  std::size_t fresh = 0;
  for (auto id : ids) {
    if (id < seen_.size() && !seen_[id]) ++fresh;
  }
  return fresh;
}

void CoverageMap::reset() {
  std::fill(seen_.begin(), seen_.end(), 0);
  covered_ = 0;
}

double coverage_fraction(const CoverageMap& map) {
  if (map.total() == 0) throw DomainError("coverage_fraction: mesh has no vertices");
  return static_cast<double>(map.covered()) / static_cast<double>(map.total());
}

double coverage_reward(double c_t, double c_prev, double alpha) {
  if (!(0.0 <= c_prev && c_prev <= c_t && c_t <= 1.0)) {
    throw DomainError(fmt::format("coverage_reward: need 0 <= C_prev ({}) <= C_t ({}) <= 1", c_prev, c_t));
  }
  return alpha * (c_t - c_prev);
}

std::vector<PlannerAction> axis_actions(double step) {
  return {{"+x", Vec3(step, 0, 0)}, {"-x", Vec3(-step, 0, 0)}, {"+y", Vec3(0, step, 0)},
          {"-y", Vec3(0, -step, 0)}, {"+z", Vec3(0, 0, step)}, {"-z", Vec3(0, 0, -step)}};
}

PlanChoice greedy_plan_step(const RigidTransform& capsule_pose, double capsule_radius, double capsule_half_axis,
                            const TriMesh& mesh, const CameraRig& rig, const CoverageMap& coverage,
                            std::span<const PlannerAction> actions) {
  if (actions.empty()) throw DomainError("greedy_plan_step: no actions");
  PlanChoice best;
  bool have = false;
  std::optional<std::vector<std::uint32_t>> stay_visible;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const RigidTransform moved(capsule_pose.rotation(), capsule_pose.translation() + actions[i].translation);
    const bool blocked = !axis_clear(mesh, moved, capsule_radius, capsule_half_axis);
    std::vector<std::uint32_t> visible;
    if (blocked) {
      if (!stay_visible) stay_visible = visible_vertices(mesh, capsule_pose, rig);
      visible = *stay_visible;
    } else {
      visible = visible_vertices(mesh, moved, rig);
    }
    const std::size_t fresh = coverage.count_new(visible);
    if (!have || fresh > best.new_vertices) {
      have = true;
      best.action = i;
      best.new_vertices = fresh;
      best.pose = blocked ? capsule_pose : moved;
      best.blocked = blocked;
      best.visible = std::move(visible);
    }
  }
  return best;
}

}  // namespace capsim::sensing
