#pragma once

#include <span>

#include "capsim/geometry.hpp"

namespace capsim::friction {

/// Below this speed (m/s) the capsule counts as at rest and friction acts as stiction.
inline constexpr double kRestSpeed = 1e-6;

enum class LogBase { Natural, Ten };

/// Piecewise total-friction curve
///   f(x) = C                    for x <= 1
///   f(x) = a log(b x + c) + C   for x > 1
/// in curve units (force in mN, velocity in mm/s by default).
struct CurveParams {
  double a = 55.04;
  double b = 0.23;
  double c = 1.04;
  double C = 100.0;
  LogBase base = LogBase::Natural;
};

/// How the dynamics loop combines friction while the capsule touches the wall.
enum class FrictionMode {
  Curve,       // total magnitude from the fitted curve
  Components,  // Coulomb + environmental + visco-adhesive
};

struct FrictionParams {
  FrictionMode mode = FrictionMode::Curve;
  double coulomb = 0.08;          // mu_c
  double viscosity = 0.05;        // gamma, N*s/m
  double contact_area = 1e-4;     // |S|, m^2
  double skew_angle = 0.2;        // theta, rad
  CurveParams curve;
  double curve_velocity_unit = 1e-3;  // m/s per curve velocity unit (mm/s)
  double curve_force_unit = 1e-3;     // N per curve force unit (mN)
};

struct ContactFrame {
  Vec3 normal_force = Vec3::Zero();  // N
  Vec3 surface = Vec3::Zero();       // contact surface normal scaled by its area, m^2
  double skew_angle = 0.0;           // rad, in [0, pi/2]
  double pressure = 0.0;             // Pa
};

/// -mu_c |N| v/|v|, zero at rest.
Vec3 coulomb_friction(double mu, const Vec3& normal_force, const Vec3& velocity);

/// P |S| sin(theta); a magnitude applied against the direction of motion.
double environmental_resistance(const ContactFrame& frame);

/// -gamma v.
inline Vec3 visco_adhesive(double gamma, const Vec3& velocity) { return -gamma * velocity; }

/// Throws DomainError when b x + c <= 0.
double total_friction_curve(double x, const CurveParams& params);

struct FrictionSample {
  double velocity = 0.0;
  double force = 0.0;
};

struct FitOptions {
  int max_iterations = 200;
  LogBase base = LogBase::Natural;
};

struct FitResult {
  CurveParams params;
  double rmse = 0.0;
  int iterations = 0;
};

/// Levenberg-Marquardt least squares fit of the piecewise curve. Needs at
/// least four distinct velocities above 1 and one at or below 1 (which pins C);
/// otherwise RankDeficientError. NonConvergenceError after max_iterations.
FitResult fit_friction_params(std::span<const FrictionSample> samples, const FitOptions& options = {});

}  // namespace capsim::friction
