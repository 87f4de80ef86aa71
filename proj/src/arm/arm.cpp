#include "capsim/arm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "capsim/errors.hpp"
#include "capsim/json_io.hpp"

namespace capsim::arm {
namespace {

using Jacobian = Eigen::Matrix<double, 6, 7>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

Vec6 pose_error(const RigidTransform& current, const RigidTransform& target) {
  Vec6 e;
  e.head<3>() = target.translation() - current.translation();
  e.tail<3>() = rotation_vector(target.rotation() * current.rotation().conjugate());
  return e;
}

Jacobian numeric_jacobian(const ArmModel& arm, const JointVector& q, double h) {
  Jacobian jac;
  for (int j = 0; j < 7; ++j) {
    JointVector plus = q;
    JointVector minus = q;
    plus[j] += h;
    minus[j] -= h;
    const RigidTransform fp = forward_kinematics(arm, plus);
    const RigidTransform fm = forward_kinematics(arm, minus);
    jac.col(j).head<3>() = (fp.translation() - fm.translation()) / (2.0 * h);
    jac.col(j).tail<3>() = rotation_vector(fp.rotation() * fm.rotation().conjugate()) / (2.0 * h);
  }
  return jac;
}

}  // namespace

Mat4 dh_matrix(const DhJoint& joint, double theta, DhConvention convention) {
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double ca = std::cos(joint.alpha);
  const double sa = std::sin(joint.alpha);
  Mat4 m;
  if (convention == DhConvention::Printed) {
    m << ct, st, 0.0, -joint.a,
        -st * ca, ct * ca, sa, -joint.d * sa,
        st * sa, -ct * sa, ca, -joint.d * ca,
        0.0, 0.0, 0.0, 1.0;
  } else {
    m << ct, -st * ca, st * sa, joint.a * ct,
        st, ct * ca, -ct * sa, joint.a * st,
        0.0, sa, ca, joint.d,
        0.0, 0.0, 0.0, 1.0;
  }
  return m;
}

void ArmModel::validate() const {
  if (joints.size() != kJointCount) {
    throw ValidationError("joints", fmt::format("expected {} joints, got {}", kJointCount, joints.size()));
  }
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& j = joints[i];
    const std::string field = fmt::format("joints[{}]", i);
    for (double v : {j.theta_offset, j.alpha, j.a, j.d, j.min, j.max}) {
      if (!std::isfinite(v)) throw ValidationError(field, "values must be finite");
    }
    if (!(j.min < j.max)) throw ValidationError(field + ".min", "must be below max");
  }
}

bool ArmModel::within_limits(const JointVector& q) const {
  for (std::size_t i = 0; i < kJointCount; ++i) {
    if (q[i] < joints[i].min || q[i] > joints[i].max) return false;
  }
  return true;
}

JointVector ArmModel::clamp(const JointVector& q) const {
  JointVector out;
  for (std::size_t i = 0; i < kJointCount; ++i) out[i] = std::clamp(q[i], joints[i].min, joints[i].max);
  return out;
}

JointVector ArmModel::mid_configuration() const {
  JointVector out;
  for (std::size_t i = 0; i < kJointCount; ++i) out[i] = 0.5 * (joints[i].min + joints[i].max);
  return out;
}

Mat4 forward_kinematics_matrix(const ArmModel& arm, const JointVector& q) {
  if (arm.joints.size() != kJointCount) {
    throw DimensionError(fmt::format("arm has {} joints, expected {}", arm.joints.size(), kJointCount));
  }
  Mat4 m = arm.base.matrix();
  for (std::size_t i = 0; i < kJointCount; ++i) {
    m = m * dh_matrix(arm.joints[i], arm.joints[i].theta_offset + q[i], arm.convention);
  }
  return m * arm.tool.matrix();
}

RigidTransform forward_kinematics(const ArmModel& arm, const JointVector& q) {
  return RigidTransform::from_matrix(forward_kinematics_matrix(arm, q));
}

RigidTransform forward_kinematics(const ArmModel& arm, std::span<const double> q) {
  if (q.size() != kJointCount) {
    throw DimensionError(fmt::format("forward_kinematics: got {} joint angles, expected {}", q.size(), kJointCount));
  }
  return forward_kinematics(arm, JointVector(Eigen::Map<const JointVector>(q.data())));
}

namespace {

struct Attempt {
  IkResult best;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
};

Attempt solve_from(const ArmModel& arm, const RigidTransform& target, JointVector q, const IkOptions& options) {
  Attempt out;
  double lambda = options.damping;
  Vec6 e = pose_error(forward_kinematics(arm, q), target);
  for (int iter = 0;; ++iter) {
    const double pos_err = e.head<3>().norm();
    const double rot_err = e.tail<3>().norm();
    if (e.norm() < out.residual) {
      out.residual = e.norm();
      out.best = {q, iter, pos_err, rot_err};
    }
    if (pos_err < options.position_tolerance && rot_err < options.rotation_tolerance) {
      out.converged = true;
      return out;
    }
    if (iter >= options.max_iterations) return out;

    const Jacobian jac = numeric_jacobian(arm, q, options.jacobian_step);
    bool moved = false;
    while (lambda < 1e3) {
      const Eigen::Matrix<double, 6, 6> jjt =
          jac * jac.transpose() + lambda * lambda * Eigen::Matrix<double, 6, 6>::Identity();
      const JointVector trial = arm.clamp(q + jac.transpose() * jjt.ldlt().solve(e));
      const Vec6 e_trial = pose_error(forward_kinematics(arm, trial), target);
      if (e_trial.norm() < e.norm()) {
        q = trial;
        e = e_trial;
        lambda = std::max(lambda * 0.5, 1e-4);
        moved = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!moved) return out;  // stuck against limits or in a local minimum
  }
}

}  // namespace

IkResult inverse_kinematics(const ArmModel& arm, const RigidTransform& target, const JointVector& q_init,
                            const IkOptions& options) {
  arm.validate();
  if (!target.translation().allFinite() || !target.rotation().coeffs().allFinite()) {
    throw DomainError("inverse_kinematics: target is not finite");
  }
  Attempt best = solve_from(arm, target, arm.clamp(q_init), options);
  std::mt19937_64 rng(options.seed);
  for (int k = 0; k < options.restarts && !best.converged; ++k) {
    JointVector q;
    for (std::size_t i = 0; i < kJointCount; ++i) {
      q[i] = std::uniform_real_distribution<double>(arm.joints[i].min, arm.joints[i].max)(rng);
    }
    const Attempt a = solve_from(arm, target, q, options);
    if (a.converged || a.residual < best.residual) best = a;
  }
  if (best.converged) return best.best;
  throw UnreachableError(fmt::format("inverse_kinematics: no solution within tolerance (best residual {:.3g}: "
                                     "{:.3g} m, {:.3g} rad)",
                                     best.residual, best.best.position_error, best.best.rotation_error),
                         best.residual);
}

ArmModel example_arm() {
  constexpr double h = std::numbers::pi / 2.0;
  const double alpha[7] = {0.0, -h, h, h, -h, h, h};
  const double a[7] = {0.0, 0.0, 0.0, 0.0825, -0.0825, 0.0, 0.088};
  const double d[7] = {0.333, 0.0, 0.316, 0.0, 0.384, 0.0, 0.0};
  const double lo[7] = {-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973};
  const double hi[7] = {2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973};
  ArmModel arm;
  for (int i = 0; i < 7; ++i) arm.joints.push_back({0.0, alpha[i], a[i], d[i], lo[i], hi[i]});
  arm.tool = RigidTransform::from_translation(Vec3(0.0, 0.0, 0.107));
  return arm;
}

ArmModel load_arm(const std::filesystem::path& path) {
  const auto j = jsonio::read_file(path);
  ArmModel arm;
  const jsonio::Json* joints = &j;
  std::optional<jsonio::ObjectReader> root;
  if (j.is_object()) {
    root.emplace(j, "");
    arm.base = root->pose("base", {});
    arm.tool = root->pose("tool", {});
    const auto conv = root->get<std::string>("convention", "printed");
    if (conv == "printed") arm.convention = DhConvention::Printed;
    else if (conv == "standard") arm.convention = DhConvention::Standard;
    else throw ValidationError("convention", "expected \"printed\" or \"standard\"");
    if (!root->has("joints")) throw ValidationError("joints", "is required");
    joints = &root->at("joints");
  }
  if (!joints->is_array()) throw ValidationError("joints", "expected an array of joint objects");
  for (std::size_t i = 0; i < joints->size(); ++i) {
    jsonio::ObjectReader r((*joints)[i], fmt::format("joints[{}]", i));
    DhJoint jt;
    jt.alpha = r.required<double>("alpha");
    jt.a = r.required<double>("a");
    jt.d = r.required<double>("d");
    jt.theta_offset = r.get<double>("theta_offset", 0.0);
    jt.min = r.required<double>("min");
    jt.max = r.required<double>("max");
    r.finish();
    arm.joints.push_back(jt);
  }
  if (root) root->finish();
  arm.validate();
  return arm;
}

void save_arm(const ArmModel& arm, const std::filesystem::path& path) {
  jsonio::Json joints = jsonio::Json::array();
  for (const auto& jt : arm.joints) {
    joints.push_back({{"alpha", jt.alpha}, {"a", jt.a}, {"d", jt.d}, {"theta_offset", jt.theta_offset},
                      {"min", jt.min}, {"max", jt.max}});
  }
  jsonio::write_file(path, {{"base", jsonio::to_json(arm.base)},
                            {"tool", jsonio::to_json(arm.tool)},
                            {"convention", arm.convention == DhConvention::Printed ? "printed" : "standard"},
                            {"joints", joints}});
}

}  // namespace capsim::arm
