#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "capsim/geometry.hpp"
#include "capsim/mesh.hpp"
#include "capsim/sensing.hpp"

namespace capsim::testing {

/// Seeded source of random test inputs.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng_); }

  Vec3 vec(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }

  Vec3 unit() {
    Vec3 v;
    do {
      v = Vec3(normal(), normal(), normal());
    } while (v.norm() < 1e-6);
    return v.normalized();
  }

  Quat quat() {
    Quat q(normal(), normal(), normal(), normal());
    return q.normalized();
  }

  /// Rotation by an angle drawn from [0, max_angle] about a random axis.
  Quat small_rotation(double max_angle) { return Quat(Eigen::AngleAxisd(uniform(0.0, max_angle), unit())); }

  RigidTransform pose(double extent) { return {quat(), vec(-extent, extent)}; }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Nearest ray hit over every triangle, without the BVH.
inline std::optional<RayHit> brute_ray_cast(const TriMesh& mesh, const Vec3& origin, const Vec3& dir,
                                            double max_dist) {
  std::optional<RayHit> best;
  const auto& v = mesh.vertices();
  for (std::uint32_t i = 0; i < mesh.triangle_count(); ++i) {
    const auto& t = mesh.triangles()[i];
    const auto d = intersect_triangle(origin, dir, v[t[0]], v[t[1]], v[t[2]]);
    if (!d || *d > max_dist) continue;
    if (!best || *d < best->distance) best = RayHit{*d, i, origin + *d * dir};
  }
  return best;
}

/// Nearest surface point over every triangle, without the BVH.
inline ClosestPoint brute_closest_point(const TriMesh& mesh, const Vec3& q) {
  ClosestPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  const auto& v = mesh.vertices();
  for (std::uint32_t i = 0; i < mesh.triangle_count(); ++i) {
    const auto& t = mesh.triangles()[i];
    const Vec3 p = closest_point_on_triangle(q, v[t[0]], v[t[1]], v[t[2]]);
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best.point = p;
      best.triangle_id = i;
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

/// Visible vertex ids by exhaustive per-vertex, per-triangle ray casting.
inline std::vector<std::uint32_t> brute_visible(const TriMesh& mesh, const RigidTransform& capsule_pose,
                                                const sensing::CameraRig& rig) {
  std::vector<std::uint32_t> ids;
  for (std::uint32_t v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3& point = mesh.vertices()[v];
    for (const auto& cam : rig.cameras) {
      const RigidTransform world = capsule_pose * cam.mount;
      const auto& in = cam.intrinsics;
      const Vec3 pc = world.inverse().apply(point);
      const double range = pc.norm();
      if (range <= sensing::kOcclusionEpsilon || range > in.max_range) continue;
      if (pc.z() <= 0.0 || pc.z() < range * std::cos(in.fov / 2)) continue;
      const double x = pc.x() / pc.z(), y = pc.y() / pc.z();
      const double r2 = x * x + y * y;
      const double k = 1 + in.k1 * r2 + in.k2 * r2 * r2;
      const double u = in.fx * x * k + in.skew * y * k + in.cx;
      const double w = in.fy * y * k + in.cy;
      if (u < 0 || u >= in.width || w < 0 || w >= in.height) continue;
      const Vec3 dir = (point - world.translation()) / range;
      if (brute_ray_cast(mesh, world.translation(), dir, range - sensing::kOcclusionEpsilon)) continue;
      ids.push_back(v);
      break;
    }
  }
  return ids;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("capsim_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace capsim::testing
