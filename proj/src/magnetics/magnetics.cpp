#include "capsim/magnetics.hpp"

#include <vector>

#include <fmt/format.h>

#include "capsim/errors.hpp"

namespace capsim::magnetics {

Vec3 dipole_field(const MagneticDipole& source, const Vec3& point, double min_distance) {
  const Vec3 r = point - source.position;
  const double dist = r.norm();
  if (dist < min_distance) {
    throw SingularityError(fmt::format("dipole field evaluated at {:.3g} m from source (min {:.3g} m)",
                                       dist, min_distance));
  }
  const Vec3 r_hat = r / dist;
  const double scale = kMu0 / (4.0 * std::numbers::pi * dist * dist * dist);
  return scale * (3.0 * source.moment.dot(r_hat) * r_hat - source.moment);
}

Vec3 total_field(std::span<const MagneticDipole> sources, const Vec3& point, double min_distance) {
  Vec3 b = Vec3::Zero();
  for (const auto& s : sources) b += dipole_field(s, point, min_distance);
  return b;
}

Vec3 dipole_force(const MagneticDipole& target, const FieldFn& field_fn, double h) {
  Vec3 force;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 step = Vec3::Zero();
    step[axis] = h;
    const double plus = target.moment.dot(field_fn(target.position + step));
    const double minus = target.moment.dot(field_fn(target.position - step));
    force[axis] = (plus - minus) / (2.0 * h);
  }
  return force;
}

FieldFn field_of(std::span<const MagneticDipole> sources, double min_distance) {
  std::vector<MagneticDipole> copy(sources.begin(), sources.end());
  return [copy = std::move(copy), min_distance](const Vec3& p) {
    return total_field(copy, p, min_distance);
  };
}

}  // namespace capsim::magnetics
