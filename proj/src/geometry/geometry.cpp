#include "capsim/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace capsim {

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  const Mat3 r = m.topLeftCorner<3, 3>();
  return {Quat(r), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::inverse() const {
  const Quat inv = rotation_.conjugate();
  return {inv, -(inv * translation_)};
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

Vec3 rotation_vector(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;  // first-order, exact to O(s^3)
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

Quat quat_from_rotation_vector(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, v / angle));
}

Quat quat_from_rpy(double roll, double pitch, double yaw) {
  const Quat q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                 Eigen::AngleAxisd(roll, Vec3::UnitX());
  return q.normalized();
}

double angular_distance(const Quat& a, const Quat& b) {
  return rotation_vector(a.conjugate() * b).norm();
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b, double* t_out) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  if (t_out) *t_out = t;
  return (p - (a + t * ab)).norm();
}

}  // namespace capsim
