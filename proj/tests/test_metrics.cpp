#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "capsim/errors.hpp"
#include "capsim/mesh_io.hpp"
#include "capsim/metrics.hpp"
#include "support.hpp"

using namespace capsim;
using capsim::testing::Gen;

namespace {

metrics::Trajectory random_walk(Gen& g, int n, double t0 = 0.0) {
  metrics::Trajectory tr;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
  for (int i = 0; i < n; ++i) {
    p += g.vec(-0.01, 0.01);
    q = (g.small_rotation(0.1) * q).normalized();
    tr.samples.push_back({t0 + 0.1 * i, RigidTransform(q, p)});
  }
  return tr;
}

metrics::Trajectory transformed(const metrics::Trajectory& tr, const RigidTransform& T) {
  metrics::Trajectory out = tr;
  for (auto& s : out.samples) s.pose = T * s.pose;
  return out;
}

std::vector<Vec3> random_cloud(Gen& g, int n, double extent) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.push_back(g.vec(-extent, extent));
  return pts;
}

}  // namespace

TEST(Tum, ParseFormatRoundTrip) {
  Gen g(61);
  const auto tr = random_walk(g, 20);
  const auto dir = capsim::testing::scratch_dir("tum");
  metrics::write_tum(dir / "a.txt", tr);
  const auto back = metrics::read_tum(dir / "a.txt");
  ASSERT_EQ(back.samples.size(), tr.samples.size());
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].t, tr.samples[i].t);
    EXPECT_EQ(back.samples[i].pose.translation(), tr.samples[i].pose.translation());
    EXPECT_LT(angular_distance(back.samples[i].pose.rotation(), tr.samples[i].pose.rotation()), 1e-15);
  }
}

TEST(Tum, CommentsAndErrors) {
  const auto tr = metrics::parse_tum("# header\n\n0 1 2 3 0 0 0 1\n1 1 2 3 0 0 0 1\n");
  EXPECT_EQ(tr.samples.size(), 2u);
  try {
    metrics::parse_tum("0 1 2 3 0 0 0 1\n1 1 2 x 0 0 0 1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(metrics::parse_tum("0 1 2 3 0 0 1\n"), ParseError);
  EXPECT_THROW(metrics::parse_tum("1 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n"), ValidationError);
  EXPECT_THROW(metrics::read_tum("/nonexistent/traj.txt"), MissingFileError);
}

TEST(Associate, NearestWithinTolerance) {
  metrics::Trajectory a, b;
  for (int i = 0; i < 5; ++i) a.samples.push_back({i * 0.1, {}});
  for (int i = 0; i < 5; ++i) b.samples.push_back({i * 0.1 + 0.005, {}});
  b.samples.back().t = 2.0;  // too far from anything
  const auto [pa, pb] = metrics::associate(a, b, 0.02);
  ASSERT_EQ(pa.samples.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(pb.samples[i].t - pa.samples[i].t, 0.005, 1e-12);
}

TEST(Align, RigidRecoversTransform) {
  Gen g(62);
  for (int k = 0; k < 20; ++k) {
    const auto pts = random_cloud(g, 50, 1.0);
    const auto T = g.pose(2.0);
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(T.apply(p));
    const auto est = metrics::rigid_align(pts, moved);
    EXPECT_LT((est.translation() - T.translation()).norm(), 1e-12);
    EXPECT_LT(angular_distance(est.rotation(), T.rotation()), 1e-12);
  }
}

TEST(Align, ReflectionIsNotReturned) {
  // A mirrored cloud: the best proper rotation has determinant +1.
  Gen g(63);
  const auto pts = random_cloud(g, 30, 1.0);
  std::vector<Vec3> mirrored;
  for (const auto& p : pts) mirrored.push_back(Vec3(-p.x(), p.y(), p.z()));
  const auto est = metrics::rigid_align(pts, mirrored);
  EXPECT_NEAR(est.rotation_matrix().determinant(), 1.0, 1e-12);
}

TEST(Align, DegenerateInputs) {
  const std::vector<Vec3> two = {Vec3::Zero(), Vec3::UnitX()};
  EXPECT_THROW(metrics::rigid_align(two, two), DegenerateError);
  const std::vector<Vec3> line = {Vec3::Zero(), Vec3::UnitX(), 2 * Vec3::UnitX(), 3 * Vec3::UnitX()};
  EXPECT_THROW(metrics::rigid_align(line, line), DegenerateError);
  const std::vector<Vec3> three = {Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
  EXPECT_THROW(metrics::rigid_align(three, line), LengthMismatchError);
}

TEST(Align, SimilarityRecoversScale) {
  Gen g(64);
  const auto pts = random_cloud(g, 40, 1.0);
  const auto T = g.pose(1.0);
  std::vector<Vec3> moved;
  for (const auto& p : pts) moved.push_back(T.apply(2.5 * p));
  const auto s = metrics::similarity_align(pts, moved);
  EXPECT_NEAR(s.scale, 2.5, 1e-12);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT((s.apply(pts[i]) - moved[i]).norm(), 1e-12);
}

TEST(Ate, ZeroForRigidCopyAndKnownOffsetOtherwise) {
  Gen g(65);
  const auto gt = random_walk(g, 100);
  const auto pred = transformed(gt, g.pose(5.0));
  const auto r = metrics::ate(pred, gt);
  EXPECT_LT(r.mean, 1e-9);
  // Independent check: per-sample errors against the fitted alignment.
  for (std::size_t i = 0; i < gt.samples.size(); ++i) {
    const double e = (r.alignment.apply(pred.samples[i].pose.translation()) - gt.samples[i].pose.translation()).norm();
    EXPECT_NEAR(r.errors[i], e, 1e-15);
  }
}

TEST(Rpe, RecoversInjectedRelativeRotation) {
  Gen g(66);
  for (int k = 0; k < 100; ++k) {
    const auto p0 = g.pose(1.0);
    const auto rel = g.pose(0.1);
    const auto p1 = p0 * rel;
    // Estimated relative motion differs by a rotation of known angle.
    const double angle = g.uniform(0.0, 3.0);
    const RigidTransform bump(Quat(Eigen::AngleAxisd(angle, g.unit())), Vec3::Zero());
    const auto q0 = g.pose(1.0);
    const auto q1 = q0 * rel * bump;
    const auto err = metrics::rpe_pair(q0, q1, p0, p1);
    EXPECT_NEAR(err.rot, angle, 1e-9);
  }
}

TEST(Rpe, RotationFromTraceIdentity) {
  Gen g(67);
  const auto p0 = g.pose(1.0), p1 = g.pose(1.0), q0 = g.pose(1.0), q1 = g.pose(1.0);
  const Mat4 E = (q0.matrix().inverse() * q1.matrix()).inverse() * (p0.matrix().inverse() * p1.matrix());
  const double trace = E.block<3, 3>(0, 0).trace();
  const double angle = std::acos(std::clamp((trace - 1.0) / 2.0, -1.0, 1.0));
  const auto err = metrics::rpe_pair(p0, p1, q0, q1);
  EXPECT_NEAR(err.rot, angle, 1e-9);
  const double trans = E.block<3, 1>(0, 3).norm();
  EXPECT_NEAR(err.trans, trans, 1e-12);
}

TEST(Rpe, SequenceStatistics) {
  Gen g(68);
  const auto gt = random_walk(g, 50);
  const auto same = metrics::rpe_sequence(gt, gt);
  EXPECT_EQ(same.pairs.size(), 49u);
  EXPECT_LT(same.trans_mean + same.rot_mean, 1e-14);
  metrics::Trajectory one;
  one.samples.push_back({0.0, {}});
  EXPECT_THROW(metrics::rpe_sequence(one, one), DomainError);
}

TEST(KdTree, NearestMatchesLinearScan) {
  Gen g(69);
  const auto pts = random_cloud(g, 2000, 1.0);
  const metrics::KdTree tree(pts);
  for (int k = 0; k < 500; ++k) {
    const Vec3 q = g.vec(-1.2, 1.2);
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = (pts[i] - q).squaredNorm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    const auto hit = tree.nearest(q);
    EXPECT_EQ(hit.index, best);
    EXPECT_EQ(hit.distance2, bd);
  }
}

TEST(KdTree, DuplicatePointsResolveToLowestIndex) {
  const std::vector<Vec3> pts(20, Vec3(1, 2, 3));
  const metrics::KdTree tree(pts);
  EXPECT_EQ(tree.nearest(Vec3(1, 2, 3.5)).index, 0u);
}

TEST(CloudDistance, KnownOffset) {
  Gen g(70);
  const auto a = random_cloud(g, 100, 1.0);
  std::vector<Vec3> b = a;
  EXPECT_EQ(metrics::cloud_to_cloud_rmse(a, b).rmse, 0.0);
  const std::vector<Vec3> single = {Vec3::Zero()};
  const std::vector<Vec3> pts = {Vec3(3, 4, 0), Vec3(0, 0, 1)};
  EXPECT_NEAR(metrics::cloud_to_cloud_rmse(pts, single).rmse, std::sqrt((25.0 + 1.0) / 2.0), 1e-15);
  EXPECT_THROW(metrics::cloud_to_cloud_rmse({}, single), DomainError);
}

TEST(Icp, RecoversSmallPerturbation) {
  Gen g(71);
  const auto fixed = random_cloud(g, 500, 0.05);
  const RigidTransform T(g.small_rotation(10.0 * std::numbers::pi / 180.0), g.unit() * 0.004);
  std::vector<Vec3> moving;
  for (const auto& p : fixed) moving.push_back(T.inverse().apply(p));
  const auto r = metrics::icp_align(moving, fixed);
  EXPECT_LT(r.rmse, 1e-6);
  for (std::size_t i = 1; i < r.rmse_history.size(); ++i) EXPECT_LE(r.rmse_history[i], r.rmse_history[i - 1]);
}

TEST(Icp, IdenticalCloudsFinishImmediately) {
  Gen g(72);
  const auto pts = random_cloud(g, 100, 1.0);
  const auto r = metrics::icp_align(pts, pts);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_LE(r.iterations, 1);
}

TEST(Heatmap, WritesReadableScalar) {
  const auto dir = capsim::testing::scratch_dir("heatmap");
  const std::vector<Vec3> pts = {Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
  const std::vector<double> d = {0.0, 0.5, 1.25};
  metrics::write_heatmap_ply(dir / "h.ply", pts, d);
  const std::string text = capsim::testing::slurp(dir / "h.ply");
  EXPECT_NE(text.find("property double c2c_dist"), std::string::npos);
  const auto back = metrics::read_cloud(dir / "h.ply");
  EXPECT_EQ(back.points.size(), 3u);
}
