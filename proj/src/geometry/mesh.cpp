#include "capsim/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "capsim/errors.hpp"

namespace capsim {
namespace {

constexpr std::uint32_t kLeafSize = 4;

double box_padding(const Eigen::AlignedBox3d& box) {
  const double scale = std::max(box.min().cwiseAbs().maxCoeff(), box.max().cwiseAbs().maxCoeff());
  return 1e-9 * (1.0 + scale);
}

// Entry distance of the ray into the box, clipped to [0, t_max].
bool ray_box(const Eigen::AlignedBox3d& box, const Vec3& origin, const Vec3& direction,
             double t_max, double& t_entry) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int axis = 0; axis < 3; ++axis) {
    const double d = direction[axis];
    const double lo = box.min()[axis];
    const double hi = box.max()[axis];
    if (d == 0.0) {
      if (origin[axis] < lo || origin[axis] > hi) return false;
      continue;
    }
    double ta = (lo - origin[axis]) / d;
    double tb = (hi - origin[axis]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  t_entry = t0;
  return true;
}

}  // namespace

// --- Bvh -------------------------------------------------------------------

Bvh::Bvh(std::span<const Vec3> vertices, std::span<const Triangle> triangles) {
  if (triangles.empty()) return;
  std::vector<Vec3> centroids(triangles.size());
  order_.resize(triangles.size());
  for (std::uint32_t i = 0; i < triangles.size(); ++i) {
    const auto& t = triangles[i];
    centroids[i] = (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
    order_[i] = i;
  }
  nodes_.reserve(2 * triangles.size() / kLeafSize + 1);
  nodes_.emplace_back();
  struct Task {
    std::uint32_t node, begin, end;
  };
  std::vector<Task> stack{{0, 0, static_cast<std::uint32_t>(triangles.size())}};
  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    const std::uint32_t n = task.end - task.begin;
    if (n <= kLeafSize) {
      nodes_[task.node].first = task.begin;
      nodes_[task.node].count = n;
      continue;
    }
    Eigen::AlignedBox3d cbox;
    for (std::uint32_t i = task.begin; i < task.end; ++i) cbox.extend(centroids[order_[i]]);
    int axis = 0;
    cbox.diagonal().maxCoeff(&axis);
    const std::uint32_t mid = task.begin + n / 2;
    std::nth_element(order_.begin() + task.begin, order_.begin() + mid, order_.begin() + task.end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = centroids[a][axis];
                       const double cb = centroids[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[task.node].first = left;
    nodes_[task.node].count = 0;
    stack.push_back({left, task.begin, mid});
    stack.push_back({left + 1, mid, task.end});
  }
  refit(vertices, triangles);
}

Eigen::AlignedBox3d Bvh::leaf_box(std::span<const Vec3> vertices,
                                  std::span<const Triangle> triangles, std::uint32_t first,
                                  std::uint32_t count) const {
  Eigen::AlignedBox3d box;
  for (std::uint32_t i = first; i < first + count; ++i) {
    for (std::uint32_t v : triangles[order_[i]]) box.extend(vertices[v]);
  }
  const double pad = box_padding(box);
  box.min().array() -= pad;
  box.max().array() += pad;
  return box;
}

void Bvh::refit(std::span<const Vec3> vertices, std::span<const Triangle> triangles) {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (node.count > 0) {
      node.box = leaf_box(vertices, triangles, node.first, node.count);
    } else {
      node.box = nodes_[node.first].box.merged(nodes_[node.first + 1].box);
    }
  }
}

// --- TriMesh ---------------------------------------------------------------

TriMesh::TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)) {
  triangles_.reserve(triangles.size());
  for (const auto& t : triangles) {
    for (std::uint32_t v : t) {
      if (v >= vertices_.size()) {
        throw InputError("triangle references vertex " + std::to_string(v) + " but mesh has " +
                         std::to_string(vertices_.size()) + " vertices");
      }
    }
    const Vec3 e1 = vertices_[t[1]] - vertices_[t[0]];
    const Vec3 e2 = vertices_[t[2]] - vertices_[t[0]];
    const double scale = std::max({e1.squaredNorm(), e2.squaredNorm(), 1e-300});
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2] || e1.cross(e2).norm() <= 1e-14 * scale) {
      ++dropped_;
      continue;
    }
    triangles_.push_back(t);
  }
  if (dropped_ > 0) spdlog::warn("mesh: dropped {} degenerate triangle(s)", dropped_);
  compute_normals();
  bvh_ = Bvh(vertices_, triangles_);
}

Vec3 TriMesh::face_normal(std::uint32_t id) const {
  const auto& t = triangles_[id];
  return (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).normalized();
}

Vec3 TriMesh::centroid(std::uint32_t id) const {
  const auto& t = triangles_[id];
  return (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0;
}

void TriMesh::set_vertices(std::vector<Vec3> vertices) {
  if (vertices.size() != vertices_.size()) {
    throw DimensionError("set_vertices: vertex count changed");
  }
  vertices_ = std::move(vertices);
  compute_normals();
  bvh_.refit(vertices_, triangles_);
}

void TriMesh::compute_normals() {
  normals_.assign(vertices_.size(), Vec3::Zero());
  for (const auto& t : triangles_) {
    // Unnormalized cross product weights each face by its area.
    const Vec3 n = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]);
    for (std::uint32_t v : t) normals_[v] += n;
  }
  for (auto& n : normals_) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
  }
}

// --- Primitive queries -----------------------------------------------------

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& direction, const Vec3& a,
                                         const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = direction.cross(e2);
  const double det = e1.dot(p);
  if (det == 0.0) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = direction.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t < 0.0) return std::nullopt;
  return t;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

std::optional<RayHit> ray_cast(const TriMesh& mesh, const Vec3& origin, const Vec3& direction,
                               double max_dist) {
  const Bvh& bvh = mesh.bvh();
  if (bvh.empty() || !(max_dist > 0.0)) return std::nullopt;
  const auto& verts = mesh.vertices();
  const auto& tris = mesh.triangles();

  double best_t = std::numeric_limits<double>::infinity();
  std::uint32_t best_id = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const auto& node = bvh.nodes()[stack.back()];
    stack.pop_back();
    double entry = 0.0;
    const double limit = std::min(max_dist, best_t);
    if (!ray_box(node.box, origin, direction, limit, entry)) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t id = bvh.order()[i];
        const auto& t = tris[id];
        const auto hit = intersect_triangle(origin, direction, verts[t[0]], verts[t[1]], verts[t[2]]);
        if (!hit || *hit > max_dist) continue;
        if (*hit < best_t || (*hit == best_t && id < best_id)) {
          best_t = *hit;
          best_id = id;
        }
      }
    } else {
      double e_left = 0.0;
      double e_right = 0.0;
      const auto& l = bvh.nodes()[node.first];
      const auto& r = bvh.nodes()[node.first + 1];
      const bool hl = ray_box(l.box, origin, direction, limit, e_left);
      const bool hr = ray_box(r.box, origin, direction, limit, e_right);
      // Push the farther child first so the nearer one is visited next.
      if (hl && hr) {
        if (e_left <= e_right) {
          stack.push_back(node.first + 1);
          stack.push_back(node.first);
        } else {
          stack.push_back(node.first);
          stack.push_back(node.first + 1);
        }
      } else if (hl) {
        stack.push_back(node.first);
      } else if (hr) {
        stack.push_back(node.first + 1);
      }
    }
  }
  if (best_id == std::numeric_limits<std::uint32_t>::max()) return std::nullopt;
  return RayHit{best_t, best_id, origin + best_t * direction};
}

ClosestPoint closest_point(const TriMesh& mesh, const Vec3& query) {
  const Bvh& bvh = mesh.bvh();
  if (bvh.empty()) throw DomainError("closest_point: empty mesh");
  const auto& verts = mesh.vertices();
  const auto& tris = mesh.triangles();

  double best_d2 = std::numeric_limits<double>::infinity();
  std::uint32_t best_id = std::numeric_limits<std::uint32_t>::max();
  Vec3 best_point = Vec3::Zero();
  std::vector<std::uint32_t> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const auto& node = bvh.nodes()[stack.back()];
    stack.pop_back();
    if (node.box.squaredExteriorDistance(query) > best_d2) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t id = bvh.order()[i];
        const auto& t = tris[id];
        const Vec3 p = closest_point_on_triangle(query, verts[t[0]], verts[t[1]], verts[t[2]]);
        const double d2 = (query - p).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && id < best_id)) {
          best_d2 = d2;
          best_id = id;
          best_point = p;
        }
      }
    } else {
      const auto& l = bvh.nodes()[node.first];
      const auto& r = bvh.nodes()[node.first + 1];
      const double dl = l.box.squaredExteriorDistance(query);
      const double dr = r.box.squaredExteriorDistance(query);
      if (dl <= dr) {
        stack.push_back(node.first + 1);
        stack.push_back(node.first);
      } else {
        stack.push_back(node.first);
        stack.push_back(node.first + 1);
      }
    }
  }
  return {best_point, std::sqrt(best_d2), best_id, mesh.face_normal(best_id)};
}

// --- Centerline ------------------------------------------------------------

std::size_t nearest_segment(std::span<const CenterlineSegment> segments, const Vec3& p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double d = point_segment_distance(p, segments[i].start, segments[i].end);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void assign_vertices_to_segments(const TriMesh& mesh, std::vector<CenterlineSegment>& segments) {
  for (auto& s : segments) s.vertex_ids.clear();
  if (segments.empty()) return;
  for (std::uint32_t v = 0; v < mesh.vertex_count(); ++v) {
    segments[nearest_segment(segments, mesh.vertices()[v])].vertex_ids.push_back(v);
  }
}

std::vector<double> centerline_coordinates(const TriMesh& mesh,
                                           std::span<const CenterlineSegment> segments) {
  std::vector<double> coords(mesh.vertex_count(), 0.0);
  if (segments.empty()) return coords;
  std::vector<double> offset(segments.size(), 0.0);
  for (std::size_t i = 1; i < segments.size(); ++i) {
    offset[i] = offset[i - 1] + segments[i - 1].length();
  }
  std::vector<int> owner(mesh.vertex_count(), -1);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    for (std::uint32_t v : segments[i].vertex_ids) {
      if (v < owner.size()) owner[v] = static_cast<int>(i);
    }
  }
  for (std::uint32_t v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3& p = mesh.vertices()[v];
    const std::size_t s = owner[v] >= 0 ? static_cast<std::size_t>(owner[v]) : nearest_segment(segments, p);
    double t = 0.0;
    point_segment_distance(p, segments[s].start, segments[s].end, &t);
    coords[v] = offset[s] + t * segments[s].length();
  }
  return coords;
}

}  // namespace capsim
