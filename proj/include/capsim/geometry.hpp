#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace capsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

/// Rotation (unit quaternion) followed by translation: p -> R p + t.
/// The rotation is re-normalized on construction and after every composition.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Quat::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Quat& rotation, const Vec3& translation)
      : rotation_(rotation.normalized()), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Quat::Identity(), t}; }
  static RigidTransform from_rotation(const Quat& q) { return {q, Vec3::Zero()}; }
  /// Homogeneous 4x4; the rotation block is re-orthonormalized through the quaternion.
  static RigidTransform from_matrix(const Mat4& m);

  const Quat& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  RigidTransform inverse() const;
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
  Mat4 matrix() const;

 private:
  Quat rotation_;
  Vec3 translation_;
};

/// Applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

/// Axis-angle vector (log map), angle in [0, pi].
Vec3 rotation_vector(const Quat& q);
/// Exponential map of an axis-angle vector.
Quat quat_from_rotation_vector(const Vec3& v);
/// Intrinsic roll/pitch/yaw about world x, y, z applied in that order.
Quat quat_from_rpy(double roll, double pitch, double yaw);

/// Angle of the relative rotation between two orientations, in [0, pi].
double angular_distance(const Quat& a, const Quat& b);

/// Distance from p to the segment [a, b], and the parameter of the closest point.
double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b, double* t_out = nullptr);

}  // namespace capsim
