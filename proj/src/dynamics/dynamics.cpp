#include "capsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "capsim/errors.hpp"

namespace capsim::dynamics {

CapsuleState CapsuleState::make(const RigidTransform& pose) {
  CapsuleState s;
  s.pose = pose;
  const double r2 = s.radius * s.radius;
  const double transverse = s.mass * (3.0 * r2 + s.length * s.length) / 12.0;
  s.inertia = Vec3(transverse, transverse, 0.5 * s.mass * r2);
  return s;
}

double CapsuleState::kinetic_energy() const {
  const Vec3 w_body = pose.rotation().conjugate() * angular_velocity;
  return 0.5 * mass * velocity.squaredNorm() + 0.5 * w_body.dot(inertia.cwiseProduct(w_body));
}

void CapsuleState::validate() const {
  if (!(mass > 0.0)) throw DomainError("capsule mass must be positive");
  if (!(inertia.minCoeff() > 0.0)) throw DomainError("capsule inertia must be positive");
  if (!(radius > 0.0) || !(length >= 2.0 * radius)) throw DomainError("capsule needs radius > 0 and length >= 2 radius");
}

ContactResult resolve_contact(const CapsuleState& capsule, const TriMesh& mesh, const ContactParams& params) {
  ContactResult out;
  if (mesh.empty()) return out;
  const Vec3 center = capsule.pose.translation();
  const Vec3 axis = capsule.axis();
  const double half = capsule.half_axis();
  const int samples = std::max(1, params.axis_samples);

  double best_d = std::numeric_limits<double>::infinity();
  ClosestPoint best;
  Vec3 best_axis_point = center;
  for (int k = 0; k < samples; ++k) {
    const double s = samples == 1 ? 0.0 : -half + 2.0 * half * k / (samples - 1);
    const Vec3 p = center + s * axis;
    const ClosestPoint cp = closest_point(mesh, p);
    if (cp.distance < best_d) {
      best_d = cp.distance;
      best = cp;
      best_axis_point = p;
    }
  }
  const double depth = capsule.radius - best_d;
  if (!(depth > 0.0)) return out;

  Vec3 n = best_axis_point - best.point;
  if (best_d > 1e-12) {
    n /= best_d;
  } else {
    n = best.normal.dot(center - best.point) >= 0.0 ? best.normal : Vec3(-best.normal);
  }
  const Vec3 lever = best.point - center;
  const Vec3 point_velocity = capsule.velocity + capsule.angular_velocity.cross(lever);
  const double magnitude = std::max(0.0, params.stiffness * depth - params.damping * point_velocity.dot(n));

  out.in_contact = true;
  out.penetration = depth;
  out.normal = n;
  out.normal_force = magnitude * n;
  out.wall_point = best.point;
  out.axis_point = best_axis_point;
  return out;
}

Vec3 contact_friction(const CapsuleState& capsule, const ContactResult& contact, const Vec3& other_forces,
                      const friction::FrictionParams& params, double dt) {
  if (!contact.in_contact) return Vec3::Zero();
  const Vec3& n = contact.normal;
  const Vec3 u_t = capsule.velocity - capsule.velocity.dot(n) * n;
  const Vec3 predicted = capsule.velocity + other_forces / capsule.mass * dt;
  const Vec3 predicted_t = predicted - predicted.dot(n) * n;
  const double speed = u_t.norm();
  const double normal_load = contact.normal_force.norm();

  friction::ContactFrame frame;
  frame.normal_force = contact.normal_force;
  frame.surface = params.contact_area * n;
  frame.skew_angle = params.skew_angle;
  frame.pressure = params.contact_area > 0.0 ? normal_load / params.contact_area : 0.0;
  const double environmental = friction::environmental_resistance(frame);

  if (speed > friction::kRestSpeed) {
    const Vec3 dir = u_t / speed;
    double magnitude = 0.0;
    if (params.mode == friction::FrictionMode::Curve) {
      magnitude = friction::total_friction_curve(speed / params.curve_velocity_unit, params.curve) *
                  params.curve_force_unit;
    } else {
      magnitude = -friction::coulomb_friction(params.coulomb, contact.normal_force, u_t).dot(dir) + environmental -
                  friction::visco_adhesive(params.viscosity, u_t).dot(dir);
    }
    // Stop exactly rather than reverse the tangential motion.
    const double cap = std::max(0.0, capsule.mass * predicted_t.dot(dir) / dt);
    return -std::min(magnitude, cap) * dir;
  }

  // Stiction: cancel the tangential load up to the static threshold.
  const double pushing = predicted_t.norm();
  if (pushing == 0.0) return Vec3::Zero();
  const double threshold = params.mode == friction::FrictionMode::Curve
                               ? params.curve.C * params.curve_force_unit
                               : params.coulomb * normal_load + environmental;
  const double cap = capsule.mass * pushing / dt;
  return -std::min(threshold, cap) * (predicted_t / pushing);
}

std::pair<CapsuleState, StepReport> step(const CapsuleState& state, World& world, double dt) {
  const auto& p = world.params;
  if (!(dt > 0.0) || dt > p.dt_max) {
    throw DomainError(fmt::format("step: dt = {:.3g} s outside (0, {:.3g}]", dt, p.dt_max));
  }
  const Vec3 center = state.pose.translation();
  const Vec3 moment = state.dipole_world();

  StepReport report;
  report.step = world.step_count + 1;
  ForceBreakdown& f = report.breakdown;
  Vec3 torque = Vec3::Zero();

  if (!world.magnets.empty()) {
    const auto field = magnetics::field_of(world.magnets, p.magnet_min_distance);
    f.magnetic = magnetics::dipole_force({moment, center}, field, p.gradient_step);
    torque += magnetics::dipole_torque(moment, field(center));
  }

  ContactResult contact;
  if (world.organ) {
    contact = resolve_contact(state, world.organ->mesh(), p.contact);
    f.contact = contact.normal_force;
    torque += (contact.wall_point - center).cross(contact.normal_force);

    const auto& peri = world.organ->peristalsis();
    if (peri.enabled) {
      if (const auto dir = world.organ->flow_direction(center)) {
        f.peristalsis = tissue::peristaltic_force(*dir, peri, state.velocity, world.organ->phase(world.t).strength);
      }
    }
  }
  if (p.gravity) f.gravity = state.mass * p.gravity_vector;

  const Vec3 others = f.magnetic + f.contact + f.peristalsis + f.gravity;
  f.friction = contact_friction(state, contact, others, world.friction, dt);
  torque -= p.rotational_damping * state.angular_velocity;

  report.net_force = f.sum();
  report.net_torque = torque;
  report.contact = contact.in_contact;
  report.penetration = contact.penetration;

  CapsuleState next = state;
  next.velocity = state.velocity + report.net_force / state.mass * dt;
  if (next.velocity.norm() > p.max_speed) {
    throw InstabilityError(fmt::format("step {}: capsule speed {:.4g} m/s exceeds {:.4g} m/s", report.step,
                                       next.velocity.norm(), p.max_speed));
  }
  const Mat3 rot = state.pose.rotation_matrix();
  const Mat3 inertia_world = rot * state.inertia.asDiagonal() * rot.transpose();
  next.angular_velocity = state.angular_velocity + inertia_world.inverse() * torque * dt;
  next.pose = RigidTransform(quat_from_rotation_vector(next.angular_velocity * dt) * state.pose.rotation(),
                             center + next.velocity * dt);

  if (world.organ) {
    std::vector<tissue::WallContact> wall;
    if (contact.in_contact) wall.push_back({contact.wall_point, -contact.normal_force});
    world.organ->step(wall, world.t, dt);
  }
  world.t += dt;
  world.step_count = report.step;
  report.t = world.t;
  return {next, report};
}

}  // namespace capsim::dynamics
