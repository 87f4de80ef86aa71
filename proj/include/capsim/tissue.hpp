#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capsim/geometry.hpp"
#include "capsim/mesh.hpp"

namespace capsim::tissue {

// --- Wall deformation ------------------------------------------------------

struct DeformationParams {
  double spring_factor = 50.0;     // k_s, 1/s^2 (restoring acceleration per metre of displacement)
  double damping = 10.0;           // mu, 1/s
  double vertex_mass = 1.0;        // kg, fixed at 1
  double influence_radius = 0.02;  // R_d, m; vertices farther from the contact get no force
  double distance_unit = 1e-3;     // m; contact distance is expressed in this unit before attenuation
  double max_displacement = 0.05;  // m; exceeding it raises InstabilityError
};

struct DeformationState {
  std::vector<Vec3> displacement;
  std::vector<Vec3> velocity;
  DeformationParams params;

  static DeformationState at_rest(std::size_t vertex_count, const DeformationParams& params = {});
};

/// Force the capsule applies to the wall at a contact point.
struct WallContact {
  Vec3 point = Vec3::Zero();
  Vec3 force = Vec3::Zero();
};

/// Inverse-square attenuation F / (d^2 + 1); d is dimensionless (distance / distance_unit).
inline Vec3 attenuated_force(const Vec3& force, double d) { return force / (d * d + 1.0); }

/// One explicit update of every vertex:
///   v += (F_v / m - k_s x) dt;  v *= (1 - mu dt);  x += v dt
/// Distances to contacts are measured from rest + current displacement.
DeformationState deform_step(const DeformationState& state, std::span<const Vec3> rest_positions,
                             std::span<const WallContact> contacts, double dt);

// --- Peristalsis -------------------------------------------------------------

enum class MmcPhaseId { I, II, III, IV };

std::string to_string(MmcPhaseId id);
MmcPhaseId mmc_phase_from_string(const std::string& s);

struct MmcPhase {
  MmcPhaseId id = MmcPhaseId::I;
  double duration_min = 1.0;
  double strength = 0.0;  // contraction strength in [0, 1]
};

struct MmcSchedule {
  std::vector<MmcPhase> phases;

  /// 100-minute cycle split 50 / 25 / 7.5 / 17.5 min, strengths 0 / 0.5 / 1 / 0.1.
  static MmcSchedule default_schedule();
  double cycle_seconds() const;
  /// Throws ValidationError unless phases run I, II, III, IV with positive durations.
  void validate() const;
};

struct PhaseState {
  MmcPhaseId id = MmcPhaseId::I;
  double strength = 0.0;
};

/// Phase containing t (seconds) modulo the cycle; a boundary belongs to the later phase.
PhaseState mmc_phase(const MmcSchedule& schedule, double t);

struct PeristalsisParams {
  bool enabled = true;
  double alpha = 3.3e-4;         // m/s, propagation speed along the segment direction
  double beta = 0.05;            // kg/s, velocity coupling
  double wave_amplitude = 1e-3;  // m
  double wave_frequency = 20.0;  // 1/m (spatial)
  double wave_speed = 0.01;      // m/s
};

/// Unit direction from segment start to end; DegenerateSegmentError if they coincide.
Vec3 segment_direction(const CenterlineSegment& segment);

/// beta * strength * (alpha * direction - u).
Vec3 peristaltic_force(const Vec3& segment_dir, const PeristalsisParams& params, const Vec3& capsule_velocity,
                       double phase_strength);

/// Radial wall offset amplitude * strength * sin(2 pi f s - 2 pi f c t) along the
/// inward normal (the negated outward rest normal).
Vec3 wall_wave_displacement(const Vec3& rest_normal, double centerline_coord, double t,
                            const PeristalsisParams& params, double phase_strength);

// --- Runtime organ -----------------------------------------------------------

/// Organ mesh with its rest shape, centerline and wall state. The simulation
/// step is its only writer.
class Organ {
 public:
  Organ(TriMesh mesh, std::vector<CenterlineSegment> segments, DeformationParams deformation = {},
        PeristalsisParams peristalsis = {}, MmcSchedule schedule = MmcSchedule::default_schedule());

  const TriMesh& mesh() const { return mesh_; }
  const std::vector<CenterlineSegment>& segments() const { return segments_; }
  const std::vector<Vec3>& rest_positions() const { return rest_; }
  const DeformationState& deformation() const { return deformation_; }
  const PeristalsisParams& peristalsis() const { return peristalsis_; }
  const MmcSchedule& schedule() const { return schedule_; }
  const std::vector<double>& centerline_coords() const { return coords_; }

  PhaseState phase(double t) const { return mmc_phase(schedule_, t); }

  /// Direction of the segment nearest to p, or nullopt when there is no centerline.
  std::optional<Vec3> flow_direction(const Vec3& p) const;

  /// Advances wall deformation by dt under the given contacts and applies the
  /// peristaltic wave for time t + dt; refits the mesh when anything moved.
  void step(std::span<const WallContact> contacts, double t, double dt);

 private:
  TriMesh mesh_;
  std::vector<CenterlineSegment> segments_;
  std::vector<Vec3> segment_dirs_;
  std::vector<Vec3> rest_;
  std::vector<Vec3> rest_normals_;
  std::vector<double> coords_;
  DeformationState deformation_;
  PeristalsisParams peristalsis_;
  MmcSchedule schedule_;
  bool deformed_ = false;
  bool waved_ = false;
};

}  // namespace capsim::tissue
