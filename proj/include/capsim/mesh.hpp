#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Geometry>

#include "capsim/geometry.hpp"

namespace capsim {

using Triangle = std::array<std::uint32_t, 3>;

struct RayHit {
  double distance = 0.0;
  std::uint32_t triangle_id = 0;
  Vec3 point = Vec3::Zero();
};

struct ClosestPoint {
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  std::uint32_t triangle_id = 0;
  Vec3 normal = Vec3::UnitZ();
};

/// Bounding-volume hierarchy over mesh triangles. Node children are stored
/// after their parent, so a reverse sweep refits bottom-up.
class Bvh {
 public:
  struct Node {
    Eigen::AlignedBox3d box;
    std::uint32_t first = 0;  // leaf: offset into order(); internal: left child index
    std::uint32_t count = 0;  // 0 for internal nodes
  };

  Bvh() = default;
  Bvh(std::span<const Vec3> vertices, std::span<const Triangle> triangles);

  void refit(std::span<const Vec3> vertices, std::span<const Triangle> triangles);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& order() const { return order_; }
  bool empty() const { return nodes_.empty(); }

 private:
  std::uint32_t build(std::span<const Vec3> centroids, std::uint32_t begin, std::uint32_t end);
  Eigen::AlignedBox3d leaf_box(std::span<const Vec3> vertices, std::span<const Triangle> triangles,
                               std::uint32_t first, std::uint32_t count) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

/// Indexed triangle mesh. Degenerate triangles are dropped on construction
/// (with a logged warning); vertex normals are unit length and follow the
/// triangle winding (counter-clockwise = outward).
class TriMesh {
 public:
  TriMesh() = default;
  TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Vec3>& vertex_normals() const { return normals_; }
  const Bvh& bvh() const { return bvh_; }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t triangle_count() const { return triangles_.size(); }
  std::size_t dropped_triangles() const { return dropped_; }
  bool empty() const { return triangles_.empty(); }

  Vec3 face_normal(std::uint32_t triangle_id) const;
  Vec3 centroid(std::uint32_t triangle_id) const;

  /// Replaces vertex positions (count must match), then recomputes normals and refits the BVH.
  void set_vertices(std::vector<Vec3> vertices);

 private:
  void compute_normals();

  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Vec3> normals_;
  Bvh bvh_;
  std::size_t dropped_ = 0;
};

/// Two-sided Moller-Trumbore test; edges count as inside. Returns t >= 0.
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& direction, const Vec3& a,
                                         const Vec3& b, const Vec3& c);

/// Closest point to p on triangle abc.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Nearest hit within max_dist; equal distances resolve to the lowest triangle id.
std::optional<RayHit> ray_cast(const TriMesh& mesh, const Vec3& origin, const Vec3& direction,
                               double max_dist);

/// Nearest surface point; equal distances resolve to the lowest triangle id.
ClosestPoint closest_point(const TriMesh& mesh, const Vec3& query);

/// Lumen centerline piece with the mesh vertices assigned to it.
struct CenterlineSegment {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::UnitZ();
  std::vector<std::uint32_t> vertex_ids;

  double length() const { return (end - start).norm(); }
};

/// Assigns every vertex to its nearest segment (lowest index on ties),
/// overwriting any previous assignment.
void assign_vertices_to_segments(const TriMesh& mesh, std::vector<CenterlineSegment>& segments);

/// Index of the segment nearest to p.
std::size_t nearest_segment(std::span<const CenterlineSegment> segments, const Vec3& p);

/// Arc-length coordinate along the chained segments of every vertex's projection.
std::vector<double> centerline_coordinates(const TriMesh& mesh,
                                           std::span<const CenterlineSegment> segments);

}  // namespace capsim
