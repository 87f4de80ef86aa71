#pragma once

#include <functional>
#include <numbers>
#include <span>

#include "capsim/geometry.hpp"

namespace capsim::magnetics {

/// Permeability of free space, N/A^2.
inline constexpr double kMu0 = 4.0 * std::numbers::pi * 1e-7;

/// Closest approach at which a dipole field may be evaluated, m.
inline constexpr double kDefaultMinDistance = 1e-3;

/// Default central-difference step for dipole_force, m.
inline constexpr double kDefaultGradientStep = 1e-5;

/// Point dipole: moment in A*m^2, position in m (both world frame).
struct MagneticDipole {
  Vec3 moment = Vec3::Zero();
  Vec3 position = Vec3::Zero();
};

using FieldFn = std::function<Vec3(const Vec3&)>;

/// Field of a point dipole, in tesla:
///   B = mu0/(4 pi r^3) * (3 (m . r_hat) r_hat - m)
/// Throws SingularityError when the point is closer than min_distance.
Vec3 dipole_field(const MagneticDipole& source, const Vec3& point,
                  double min_distance = kDefaultMinDistance);

/// Superposed field of several sources.
Vec3 total_field(std::span<const MagneticDipole> sources, const Vec3& point,
                 double min_distance = kDefaultMinDistance);

/// Torque m x B on a dipole, N*m.
inline Vec3 dipole_torque(const Vec3& moment, const Vec3& field) { return moment.cross(field); }

/// Force grad(m . B) at target.position, from central differences of the
/// scalar m . B with step h. The moment is held fixed while the position varies.
Vec3 dipole_force(const MagneticDipole& target, const FieldFn& field_fn,
                  double h = kDefaultGradientStep);

/// Field function over a fixed set of sources.
FieldFn field_of(std::span<const MagneticDipole> sources, double min_distance = kDefaultMinDistance);

}  // namespace capsim::magnetics
