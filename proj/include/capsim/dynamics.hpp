#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "capsim/friction.hpp"
#include "capsim/geometry.hpp"
#include "capsim/magnetics.hpp"
#include "capsim/mesh.hpp"
#include "capsim/tissue.hpp"

namespace capsim::dynamics {

/// Rigid capsule: a cylinder with hemispherical caps along body +z.
struct CapsuleState {
  RigidTransform pose;
  Vec3 velocity = Vec3::Zero();          // m/s, world frame
  Vec3 angular_velocity = Vec3::Zero();  // rad/s, world frame
  double mass = 0.005;                   // kg
  Vec3 inertia = Vec3::Zero();           // principal moments about body x, y, z, kg*m^2
  Vec3 dipole_body = Vec3(0.0, 0.0, 1.26e-2);  // A*m^2
  double radius = 0.0055;                // m
  double length = 0.026;                 // m, tip to tip

  /// Default-sized capsule at the given pose with solid-cylinder inertia.
  static CapsuleState make(const RigidTransform& pose = {});

  Vec3 axis() const { return pose.rotate(Vec3::UnitZ()); }
  Vec3 dipole_world() const { return pose.rotate(dipole_body); }
  /// Half length of the axis segment between the cap centers.
  double half_axis() const { return std::max(0.0, 0.5 * length - radius); }
  double kinetic_energy() const;
  /// Throws DomainError unless mass, inertia and dimensions are positive.
  void validate() const;
};

struct ForceBreakdown {
  Vec3 magnetic = Vec3::Zero();
  Vec3 friction = Vec3::Zero();
  Vec3 peristalsis = Vec3::Zero();
  Vec3 contact = Vec3::Zero();
  Vec3 gravity = Vec3::Zero();

  Vec3 sum() const { return magnetic + friction + peristalsis + contact + gravity; }
};

struct StepReport {
  double t = 0.0;  // time at the end of the step
  std::uint64_t step = 0;
  Vec3 net_force = Vec3::Zero();
  Vec3 net_torque = Vec3::Zero();
  bool contact = false;
  double penetration = 0.0;
  ForceBreakdown breakdown;
};

struct ContactParams {
  double stiffness = 500.0;  // k_c, N/m
  double damping = 1.0;      // c_c, N*s/m
  int axis_samples = 9;      // points sampled along the capsule axis
};

struct ContactResult {
  bool in_contact = false;
  double penetration = 0.0;
  Vec3 normal_force = Vec3::Zero();  // on the capsule
  Vec3 normal = Vec3::Zero();        // unit, from the wall toward the capsule axis
  Vec3 wall_point = Vec3::Zero();
  Vec3 axis_point = Vec3::Zero();
};

/// Penalty contact against the deepest point of the wall along the capsule axis:
/// N = max(0, k_c delta - c_c v.n) n.
ContactResult resolve_contact(const CapsuleState& capsule, const TriMesh& mesh, const ContactParams& params);

struct DynamicsParams {
  double dt_max = 1e-3;            // s
  double max_speed = 1.0;          // m/s; faster raises InstabilityError
  double rotational_damping = 1e-5;  // N*m*s
  bool gravity = false;
  Vec3 gravity_vector = Vec3(0.0, 0.0, -9.81);
  ContactParams contact;
  double magnet_min_distance = magnetics::kDefaultMinDistance;
  double gradient_step = magnetics::kDefaultGradientStep;
};

/// Everything the capsule interacts with. step() is its only writer.
struct World {
  std::optional<tissue::Organ> organ;
  std::vector<magnetics::MagneticDipole> magnets;  // external sources
  friction::FrictionParams friction;
  DynamicsParams params;
  double t = 0.0;
  std::uint64_t step_count = 0;
};

/// Friction on a capsule touching the wall, given the other forces acting on it.
/// Opposes tangential motion and never reverses it within one step; at rest it
/// cancels tangential load up to the static threshold.
Vec3 contact_friction(const CapsuleState& capsule, const ContactResult& contact, const Vec3& other_forces,
                      const friction::FrictionParams& params, double dt);

/// One semi-implicit Euler step:
///   u' = u + F/m dt, x' = x + u' dt, w' = w + I^-1 tau dt, q' = exp(w' dt) q
/// then advances the organ wall under the contact load.
std::pair<CapsuleState, StepReport> step(const CapsuleState& state, World& world, double dt);

}  // namespace capsim::dynamics
