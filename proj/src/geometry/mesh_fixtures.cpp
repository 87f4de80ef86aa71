#include "capsim/mesh_fixtures.hpp"

#include <cmath>
#include <numbers>

#include "capsim/errors.hpp"

namespace capsim::fixtures {
namespace {

struct CenterlineFrame {
  Vec3 point;
  Vec3 tangent;
  Vec3 normal;  // tangent x normal = binormal = +y for the planar curves used here
};

std::vector<Triangle> tube_triangles(int n_around, int n_rings) {
  std::vector<Triangle> tris;
  tris.reserve(static_cast<std::size_t>(2 * n_around * (n_rings - 1)));
  auto id = [n_around](int ring, int j) {
    return static_cast<std::uint32_t>(ring * n_around + (j % n_around));
  };
  for (int i = 0; i + 1 < n_rings; ++i) {
    for (int j = 0; j < n_around; ++j) {
      const auto a = id(i, j);
      const auto b = id(i, j + 1);
      const auto c = id(i + 1, j);
      const auto d = id(i + 1, j + 1);
      tris.push_back({a, b, c});
      tris.push_back({b, d, c});
    }
  }
  return tris;
}

std::vector<Vec3> ring_vertices(const std::vector<CenterlineFrame>& frames, double radius, int n_around) {
  std::vector<Vec3> verts;
  verts.reserve(frames.size() * static_cast<std::size_t>(n_around));
  for (const auto& f : frames) {
    const Vec3 binormal = f.tangent.cross(f.normal);
    for (int j = 0; j < n_around; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / n_around;
      verts.push_back(f.point + radius * (std::cos(phi) * f.normal + std::sin(phi) * binormal));
    }
  }
  return verts;
}

}  // namespace

Organ make_tube(double radius, double length, int n_around, int n_rings) {
  if (radius <= 0 || length <= 0 || n_around < 3 || n_rings < 2) {
    throw DomainError("make_tube: invalid dimensions");
  }
  std::vector<CenterlineFrame> frames;
  for (int i = 0; i < n_rings; ++i) {
    const double z = length * i / (n_rings - 1);
    // normal = -y so that binormal = tangent x normal = +x and the winding faces outward.
    frames.push_back({Vec3(0, 0, z), Vec3::UnitZ(), -Vec3::UnitY()});
  }
  Organ organ{TriMesh(ring_vertices(frames, radius, n_around), tube_triangles(n_around, n_rings)),
              {CenterlineSegment{Vec3::Zero(), Vec3(0, 0, length), {}}}};
  assign_vertices_to_segments(organ.mesh, organ.segments);
  return organ;
}

Organ make_bent_tube(double radius, double straight_in, double bend_radius, double bend_angle,
                     double straight_out, int n_around, int n_rings) {
  if (radius <= 0 || bend_radius <= radius || straight_in < 0 || straight_out < 0 || bend_angle <= 0 ||
      n_around < 3 || n_rings < 2) {
    throw DomainError("make_bent_tube: invalid dimensions");
  }
  const double arc = bend_radius * bend_angle;
  const double total = straight_in + arc + straight_out;
  const Vec3 bend_center(bend_radius, 0.0, straight_in);
  const Vec3 exit_point = bend_center + bend_radius * Vec3(-std::cos(bend_angle), 0.0, std::sin(bend_angle));
  const Vec3 exit_tangent(std::sin(bend_angle), 0.0, std::cos(bend_angle));

  auto frame_at = [&](double s) -> CenterlineFrame {
    Vec3 p, t;
    if (s <= straight_in) {
      p = Vec3(0, 0, s);
      t = Vec3::UnitZ();
    } else if (s <= straight_in + arc) {
      const double th = (s - straight_in) / bend_radius;
      p = bend_center + bend_radius * Vec3(-std::cos(th), 0.0, std::sin(th));
      t = Vec3(std::sin(th), 0.0, std::cos(th));
    } else {
      p = exit_point + (s - straight_in - arc) * exit_tangent;
      t = exit_tangent;
    }
    // The curve lies in the xz-plane, so -y stays perpendicular to the tangent.
    return {p, t, -Vec3::UnitY()};
  };

  std::vector<CenterlineFrame> frames;
  for (int i = 0; i < n_rings; ++i) frames.push_back(frame_at(total * i / (n_rings - 1)));

  Organ organ{TriMesh(ring_vertices(frames, radius, n_around), tube_triangles(n_around, n_rings)), {}};
  if (straight_in > 0) organ.segments.push_back({Vec3::Zero(), Vec3(0, 0, straight_in), {}});
  constexpr int kArcPieces = 4;
  for (int k = 0; k < kArcPieces; ++k) {
    const double s0 = straight_in + arc * k / kArcPieces;
    const double s1 = straight_in + arc * (k + 1) / kArcPieces;
    organ.segments.push_back({frame_at(s0).point, frame_at(s1).point, {}});
  }
  if (straight_out > 0) organ.segments.push_back({exit_point, exit_point + straight_out * exit_tangent, {}});
  assign_vertices_to_segments(organ.mesh, organ.segments);
  return organ;
}

TriMesh make_ellipsoid(double rx, double ry, double rz, int n_lat, int n_lon) {
  if (rx <= 0 || ry <= 0 || rz <= 0 || n_lat < 2 || n_lon < 3) {
    throw DomainError("make_ellipsoid: invalid dimensions");
  }
  std::vector<Vec3> verts;
  verts.emplace_back(0, 0, rz);
  for (int i = 1; i < n_lat; ++i) {
    const double theta = std::numbers::pi * i / n_lat;
    for (int j = 0; j < n_lon; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / n_lon;
      verts.emplace_back(rx * std::sin(theta) * std::cos(phi), ry * std::sin(theta) * std::sin(phi),
                         rz * std::cos(theta));
    }
  }
  verts.emplace_back(0, 0, -rz);
  const auto south = static_cast<std::uint32_t>(verts.size() - 1);
  auto id = [n_lon](int ring, int j) {
    return static_cast<std::uint32_t>(1 + (ring - 1) * n_lon + (j % n_lon));
  };
  std::vector<Triangle> tris;
  for (int j = 0; j < n_lon; ++j) tris.push_back({0, id(1, j), id(1, j + 1)});
  for (int i = 1; i + 1 < n_lat; ++i) {
    for (int j = 0; j < n_lon; ++j) {
      tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  for (int j = 0; j < n_lon; ++j) tris.push_back({south, id(n_lat - 1, j + 1), id(n_lat - 1, j)});
  return TriMesh(std::move(verts), std::move(tris));
}

TriMesh make_uv_sphere(double radius, int n_lat, int n_lon) {
  return make_ellipsoid(radius, radius, radius, n_lat, n_lon);
}

TriMesh make_tetrahedron() {
  std::vector<Vec3> v{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  std::vector<Triangle> t{{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return TriMesh(std::move(v), std::move(t));
}

TriMesh make_plane_grid(int nx, int ny, double spacing, const Vec3& origin) {
  if (nx < 2 || ny < 2 || spacing <= 0) throw DomainError("make_plane_grid: invalid dimensions");
  std::vector<Vec3> verts;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) verts.push_back(origin + Vec3(i * spacing, j * spacing, 0.0));
  }
  auto id = [nx](int i, int j) { return static_cast<std::uint32_t>(j * nx + i); };
  std::vector<Triangle> tris;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriMesh(std::move(verts), std::move(tris));
}

}  // namespace capsim::fixtures
