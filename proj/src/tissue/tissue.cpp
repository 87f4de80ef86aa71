#include "capsim/tissue.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "capsim/errors.hpp"

namespace capsim::tissue {

DeformationState DeformationState::at_rest(std::size_t vertex_count, const DeformationParams& params) {
  return {std::vector<Vec3>(vertex_count, Vec3::Zero()), std::vector<Vec3>(vertex_count, Vec3::Zero()),
          params};
}

DeformationState deform_step(const DeformationState& state, std::span<const Vec3> rest_positions,
                             std::span<const WallContact> contacts, double dt) {
  if (!(dt > 0.0)) throw DomainError("deform_step: dt must be positive");
  const auto& p = state.params;
  const std::size_t n = state.displacement.size();
  if (state.velocity.size() != n || rest_positions.size() != n) {
    throw DimensionError("deform_step: state and mesh sizes differ");
  }
  DeformationState next = state;
  const double r2 = p.influence_radius * p.influence_radius;
  const double decay = 1.0 - p.damping * dt;
  for (std::size_t v = 0; v < n; ++v) {
    const Vec3 pos = rest_positions[v] + state.displacement[v];
    Vec3 force = Vec3::Zero();
    for (const auto& c : contacts) {
      const double d2 = (pos - c.point).squaredNorm();
      if (d2 > r2) continue;
      force += attenuated_force(c.force, std::sqrt(d2) / p.distance_unit);
    }
    Vec3 vel = state.velocity[v] + (force / p.vertex_mass - p.spring_factor * state.displacement[v]) * dt;
    vel *= decay;
    next.velocity[v] = vel;
    next.displacement[v] = state.displacement[v] + vel * dt;
    if (next.displacement[v].norm() > p.max_displacement) {
      throw InstabilityError(fmt::format("wall vertex {} displaced {:.4g} m (limit {:.4g} m)", v,
                                         next.displacement[v].norm(), p.max_displacement));
    }
  }
  return next;
}

std::string to_string(MmcPhaseId id) {
  switch (id) {
    case MmcPhaseId::I: return "I";
    case MmcPhaseId::II: return "II";
    case MmcPhaseId::III: return "III";
    case MmcPhaseId::IV: return "IV";
  }
  return "?";
}

MmcPhaseId mmc_phase_from_string(const std::string& s) {
  if (s == "I") return MmcPhaseId::I;
  if (s == "II") return MmcPhaseId::II;
  if (s == "III") return MmcPhaseId::III;
  if (s == "IV") return MmcPhaseId::IV;
  throw ValidationError("mmc_schedule.phase", "unknown phase \"" + s + "\"");
}

MmcSchedule MmcSchedule::default_schedule() {
  return {{{MmcPhaseId::I, 50.0, 0.0},
           {MmcPhaseId::II, 25.0, 0.5},
           {MmcPhaseId::III, 7.5, 1.0},
           {MmcPhaseId::IV, 17.5, 0.1}}};
}

double MmcSchedule::cycle_seconds() const {
  double total = 0.0;
  for (const auto& ph : phases) total += ph.duration_min;
  return total * 60.0;
}

void MmcSchedule::validate() const {
  if (phases.size() != 4) throw ValidationError("mmc_schedule", "expected exactly four phases");
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (phases[i].id != static_cast<MmcPhaseId>(i)) {
      throw ValidationError("mmc_schedule", "phases must run I, II, III, IV");
    }
    if (!(phases[i].duration_min > 0.0)) throw ValidationError("mmc_schedule.duration_min", "must be > 0");
    if (!(phases[i].strength >= 0.0 && phases[i].strength <= 1.0)) {
      throw ValidationError("mmc_schedule.strength", "must lie in [0, 1]");
    }
  }
}

PhaseState mmc_phase(const MmcSchedule& schedule, double t) {
  const double cycle = schedule.cycle_seconds();
  double local = std::fmod(t, cycle);
  if (local < 0.0) local += cycle;
  double start = 0.0;
  for (const auto& ph : schedule.phases) {
    const double end = start + ph.duration_min * 60.0;
    if (local < end) return {ph.id, ph.strength};
    start = end;
  }
  // Only reachable through rounding at the very end of the cycle.
  return {schedule.phases.front().id, schedule.phases.front().strength};
}

Vec3 segment_direction(const CenterlineSegment& segment) {
  const Vec3 d = segment.end - segment.start;
  const double len = d.norm();
  if (len == 0.0) throw DegenerateSegmentError("segment start and end coincide");
  return d / len;
}

Vec3 peristaltic_force(const Vec3& segment_dir, const PeristalsisParams& params, const Vec3& capsule_velocity,
                       double phase_strength) {
  if (phase_strength == 0.0) return Vec3::Zero();
  const Vec3 propagation = params.alpha * segment_dir;
  return params.beta * phase_strength * (propagation - capsule_velocity);
}

Vec3 wall_wave_displacement(const Vec3& rest_normal, double centerline_coord, double t,
                            const PeristalsisParams& params, double phase_strength) {
  const double k = 2.0 * std::numbers::pi * params.wave_frequency;
  const double omega = k * params.wave_speed;
  const double offset = params.wave_amplitude * phase_strength * std::sin(k * centerline_coord - omega * t);
  return -offset * rest_normal;
}

// --- Organ -----------------------------------------------------------------

Organ::Organ(TriMesh mesh, std::vector<CenterlineSegment> segments, DeformationParams deformation,
             PeristalsisParams peristalsis, MmcSchedule schedule)
    : mesh_(std::move(mesh)),
      segments_(std::move(segments)),
      rest_(mesh_.vertices()),
      rest_normals_(mesh_.vertex_normals()),
      deformation_(DeformationState::at_rest(mesh_.vertex_count(), deformation)),
      peristalsis_(peristalsis),
      schedule_(std::move(schedule)) {
  schedule_.validate();
  for (const auto& s : segments_) segment_dirs_.push_back(segment_direction(s));
  coords_ = centerline_coordinates(mesh_, segments_);
}

std::optional<Vec3> Organ::flow_direction(const Vec3& p) const {
  if (segments_.empty()) return std::nullopt;
  return segment_dirs_[nearest_segment(segments_, p)];
}

void Organ::step(std::span<const WallContact> contacts, double t, double dt) {
  bool changed = false;
  if (!contacts.empty() || deformed_) {
    deformation_ = deform_step(deformation_, rest_, contacts, dt);
    changed = true;
    deformed_ = true;
    if (contacts.empty()) {
      double peak = 0.0;
      for (std::size_t v = 0; v < rest_.size(); ++v) {
        peak = std::max({peak, deformation_.displacement[v].norm(), deformation_.velocity[v].norm()});
      }
      // Settled below any meaningful scale: snap back to the exact rest shape.
      if (peak < 1e-12) {
        deformation_ = DeformationState::at_rest(rest_.size(), deformation_.params);
        deformed_ = false;
      }
    }
  }

  const double strength = phase(t + dt).strength;
  const bool wave = peristalsis_.enabled && peristalsis_.wave_amplitude != 0.0 && strength > 0.0 &&
                    !segments_.empty();
  if (wave || waved_) changed = true;
  waved_ = wave;
  if (!changed) return;

  std::vector<Vec3> positions(rest_.size());
  for (std::size_t v = 0; v < rest_.size(); ++v) {
    positions[v] = rest_[v] + deformation_.displacement[v];
    if (wave) positions[v] += wall_wave_displacement(rest_normals_[v], coords_[v], t + dt, peristalsis_, strength);
  }
  mesh_.set_vertices(std::move(positions));
}

}  // namespace capsim::tissue
