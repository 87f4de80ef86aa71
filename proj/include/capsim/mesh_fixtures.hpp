#pragma once

#include <vector>

#include "capsim/mesh.hpp"

namespace capsim::fixtures {

/// A mesh plus its centerline (empty for non-tubular shapes).
struct Organ {
  TriMesh mesh;
  std::vector<CenterlineSegment> segments;
};

/// Open cylinder along +z from z=0 to z=length; outward-facing winding.
Organ make_tube(double radius, double length, int n_around, int n_rings);

/// Open tube: straight run along +z, a circular bend toward +x, then a second
/// straight run. Rings are spaced uniformly in arc length.
Organ make_bent_tube(double radius, double straight_in, double bend_radius, double bend_angle,
                     double straight_out, int n_around, int n_rings);

/// Closed UV sphere centered at the origin, outward winding.
TriMesh make_uv_sphere(double radius, int n_lat, int n_lon);

/// Closed ellipsoid (scaled UV sphere); the default organ-like "stomach" shape.
TriMesh make_ellipsoid(double rx, double ry, double rz, int n_lat, int n_lon);

/// Unit tetrahedron (0,0,0), (1,0,0), (0,1,0), (0,0,1).
TriMesh make_tetrahedron();

/// Planar grid in z=0 with nx x ny vertices at the given spacing; normals +z.
TriMesh make_plane_grid(int nx, int ny, double spacing, const Vec3& origin = Vec3::Zero());

}  // namespace capsim::fixtures
