#include <gtest/gtest.h>

#include <cmath>

#include "capsim/arm.hpp"
#include "capsim/errors.hpp"
#include "support.hpp"

using namespace capsim;
using capsim::testing::Gen;

namespace {

// Link matrices written out independently of the library.
Mat4 standard_dh(double theta, double alpha, double a, double d) {
  const double ct = std::cos(theta), st = std::sin(theta), ca = std::cos(alpha), sa = std::sin(alpha);
  Mat4 m;
  m << ct, -st * ca, st * sa, a * ct,  //
      st, ct * ca, -ct * sa, a * st,   //
      0, sa, ca, d,                    //
      0, 0, 0, 1;
  return m;
}

Mat4 printed_dh(double theta, double alpha, double a, double d) {
  const double ct = std::cos(theta), st = std::sin(theta), ca = std::cos(alpha), sa = std::sin(alpha);
  Mat4 m;
  m << ct, st, 0, -a,                 //
      -st * ca, ct * ca, sa, -d * sa,  //
      st * sa, -ct * sa, ca, -d * ca,  //
      0, 0, 0, 1;
  return m;
}

arm::JointVector random_q(const arm::ArmModel& model, Gen& g) {
  arm::JointVector q;
  for (int i = 0; i < 7; ++i) {
    const auto& j = model.joints[i];
    q[i] = g.uniform(j.min + 0.1 * (j.max - j.min), j.max - 0.1 * (j.max - j.min));
  }
  return q;
}

}  // namespace

TEST(Dh, PrintedMatrixMatchesLayout) {
  Gen g(41);
  for (int i = 0; i < 20; ++i) {
    arm::DhJoint j{0.0, g.uniform(-3, 3), g.uniform(-0.5, 0.5), g.uniform(-0.5, 0.5)};
    const double th = g.uniform(-3, 3);
    EXPECT_LT((arm::dh_matrix(j, th) - printed_dh(th, j.alpha, j.a, j.d)).norm(), 1e-15);
    EXPECT_LT((arm::dh_matrix(j, th, arm::DhConvention::Standard) - standard_dh(th, j.alpha, j.a, j.d)).norm(), 1e-15);
  }
}

TEST(Dh, PrintedIsInverseOfStandard) {
  Gen g(42);
  for (int i = 0; i < 20; ++i) {
    arm::DhJoint j{0.0, g.uniform(-3, 3), g.uniform(-0.5, 0.5), g.uniform(-0.5, 0.5)};
    const double th = g.uniform(-3, 3);
    const Mat4 prod = arm::dh_matrix(j, th) * arm::dh_matrix(j, th, arm::DhConvention::Standard);
    EXPECT_LT((prod - Mat4::Identity()).norm(), 1e-14);
  }
}

TEST(Fk, AllZeroParametersGiveExactIdentity) {
  arm::ArmModel m;
  m.joints.assign(7, arm::DhJoint{});
  const auto T = arm::forward_kinematics_matrix(m, arm::JointVector::Zero());
  EXPECT_TRUE(T == Mat4::Identity());
  const auto P = arm::forward_kinematics(m, arm::JointVector::Zero());
  EXPECT_TRUE(P.translation() == Vec3::Zero());
  EXPECT_TRUE(P.rotation().coeffs() == Quat::Identity().coeffs());
}

TEST(Fk, MatchesManualProduct) {
  const auto m = arm::example_arm();
  Gen g(43);
  for (int k = 0; k < 20; ++k) {
    const auto q = random_q(m, g);
    Mat4 T = m.base.matrix();
    for (int i = 0; i < 7; ++i) {
      const auto& j = m.joints[i];
      T = T * printed_dh(j.theta_offset + q[i], j.alpha, j.a, j.d);
    }
    T = T * m.tool.matrix();
    EXPECT_LT((arm::forward_kinematics_matrix(m, q) - T).norm(), 1e-12);
    const auto P = arm::forward_kinematics(m, q);
    EXPECT_LT((P.translation() - T.block<3, 1>(0, 3)).norm(), 1e-12);
  }
}

TEST(Fk, WrongJointCount) {
  const auto m = arm::example_arm();
  const std::vector<double> six(6, 0.0);
  EXPECT_THROW(arm::forward_kinematics(m, std::span<const double>(six)), DimensionError);
}

TEST(Ik, RecoversReachableTargets) {
  const auto m = arm::example_arm();
  Gen g(44);
  int ok = 0;
  for (int k = 0; k < 30; ++k) {
    const auto target = arm::forward_kinematics(m, random_q(m, g));
    try {
      const auto r = arm::inverse_kinematics(m, target, m.mid_configuration());
      const auto reached = arm::forward_kinematics(m, r.q);
      if ((reached.translation() - target.translation()).norm() < 1e-4 &&
          angular_distance(reached.rotation(), target.rotation()) < 1e-3 && m.within_limits(r.q)) {
        ++ok;
      }
    } catch (const UnreachableError&) {
    }
  }
  EXPECT_GE(ok, 28);
}

TEST(Ik, UnreachableCarriesResidual) {
  const auto m = arm::example_arm();
  const auto far = RigidTransform::from_translation(Vec3(5, 0, 0));
  try {
    arm::inverse_kinematics(m, far, m.mid_configuration());
    FAIL() << "expected UnreachableError";
  } catch (const UnreachableError& e) {
    EXPECT_GT(e.best_residual(), 3.0);
  }
}

TEST(ArmModel, LimitsAndClamp) {
  const auto m = arm::example_arm();
  arm::JointVector q = m.mid_configuration();
  EXPECT_TRUE(m.within_limits(q));
  q[3] = 100;
  EXPECT_FALSE(m.within_limits(q));
  EXPECT_EQ(m.clamp(q)[3], m.joints[3].max);
  arm::ArmModel six = m;
  six.joints.pop_back();
  EXPECT_THROW(six.validate(), ValidationError);
}

TEST(ArmIo, RoundTrip) {
  const auto dir = capsim::testing::scratch_dir("arm");
  auto m = arm::example_arm();
  m.convention = arm::DhConvention::Standard;
  arm::save_arm(m, dir / "arm.json");
  const auto back = arm::load_arm(dir / "arm.json");
  ASSERT_EQ(back.joints.size(), 7u);
  EXPECT_EQ(back.convention, arm::DhConvention::Standard);
  for (int i = 0; i < 7; ++i) {
    EXPECT_EQ(back.joints[i].a, m.joints[i].a);
    EXPECT_EQ(back.joints[i].min, m.joints[i].min);
  }
  Gen g(45);
  const auto q = random_q(m, g);
  EXPECT_LT((arm::forward_kinematics_matrix(back, q) - arm::forward_kinematics_matrix(m, q)).norm(), 1e-15);
}

TEST(ArmIo, BadFiles) {
  const auto dir = capsim::testing::scratch_dir("arm_bad");
  EXPECT_THROW(arm::load_arm(dir / "missing.json"), MissingFileError);
  capsim::testing::spit(dir / "a.json", R"({"joints": [{"a": 0}]})");
  EXPECT_THROW(arm::load_arm(dir / "a.json"), ValidationError);
  capsim::testing::spit(dir / "b.json", R"({"joints": )");
  EXPECT_THROW(arm::load_arm(dir / "b.json"), ParseError);
}
