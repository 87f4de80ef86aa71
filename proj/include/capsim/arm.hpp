#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "capsim/geometry.hpp"

namespace capsim::arm {

inline constexpr std::size_t kJointCount = 7;

struct DhJoint {
  double theta_offset = 0.0;  // rad, added to the joint variable
  double alpha = 0.0;         // rad
  double a = 0.0;             // m
  double d = 0.0;             // m
  double min = -3.14159265358979323846;  // rad
  double max = 3.14159265358979323846;   // rad
};

enum class DhConvention {
  Printed,   // the sign layout with -a, -d sin(alpha), -d cos(alpha) in the last column
  Standard,  // classic Denavit-Hartenberg
};

/// Link transform for joint angle theta (theta_offset already folded in by the caller).
///
/// Printed layout:
///   [ c_t        s_t        0     -a        ]
///   [ -s_t c_a   c_t c_a    s_a   -d s_a    ]
///   [ s_t s_a    -c_t s_a   c_a   -d c_a    ]
///   [ 0          0          0     1         ]
/// which is the inverse of the standard matrix for the same parameters.
Mat4 dh_matrix(const DhJoint& joint, double theta, DhConvention convention = DhConvention::Printed);

using JointVector = Eigen::Matrix<double, 7, 1>;

struct ArmModel {
  RigidTransform base;
  std::vector<DhJoint> joints;
  RigidTransform tool;
  DhConvention convention = DhConvention::Printed;

  /// Throws ValidationError for a joint count other than 7 or bad limits.
  void validate() const;
  bool within_limits(const JointVector& q) const;
  JointVector clamp(const JointVector& q) const;
  JointVector mid_configuration() const;
};

/// base * A_1(q_0) * ... * A_7(q_6) * tool. DimensionError unless q has 7 entries.
RigidTransform forward_kinematics(const ArmModel& arm, std::span<const double> q);
RigidTransform forward_kinematics(const ArmModel& arm, const JointVector& q);

/// Same chain as a raw matrix product, without the quaternion round trip.
Mat4 forward_kinematics_matrix(const ArmModel& arm, const JointVector& q);

struct IkOptions {
  double damping = 0.05;             // initial lambda; adapted per iteration
  double position_tolerance = 1e-4;  // m
  double rotation_tolerance = 1e-3;  // rad
  int max_iterations = 300;          // per attempt
  double jacobian_step = 1e-6;       // rad
  int restarts = 16;                 // extra attempts from seeded random configurations
  std::uint64_t seed = 1;
};

struct IkResult {
  JointVector q = JointVector::Zero();
  int iterations = 0;
  double position_error = 0.0;
  double rotation_error = 0.0;
};

/// Damped least squares on the 6-D error (position, rotation vector) with a
/// central-difference Jacobian. The iterate is clamped to the joint limits; a
/// step that does not lower the error is retried with more damping. When an
/// attempt stalls, the solver restarts from seeded random configurations, so the
/// result is deterministic. Throws UnreachableError carrying the best residual.
IkResult inverse_kinematics(const ArmModel& arm, const RigidTransform& target, const JointVector& q_init,
                            const IkOptions& options = {});

/// A 7-joint table shaped like a common research arm, with its joint limits.
ArmModel example_arm();

ArmModel load_arm(const std::filesystem::path& path);
void save_arm(const ArmModel& arm, const std::filesystem::path& path);

}  // namespace capsim::arm
