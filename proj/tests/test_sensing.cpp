#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "capsim/errors.hpp"
#include "capsim/mesh_fixtures.hpp"
#include "capsim/sensing.hpp"
#include "support.hpp"

using namespace capsim;
using capsim::testing::Gen;

TEST(Project, PinholeExample) {
  sensing::CameraIntrinsics in;
  in.fx = in.fy = 500;
  in.cx = 320;
  in.cy = 240;
  in.width = 640;
  in.height = 480;
  const auto px = sensing::project(in, Vec3(0.1, 0, 1));
  ASSERT_TRUE(px);
  EXPECT_DOUBLE_EQ(px->u, 370.0);
  EXPECT_DOUBLE_EQ(px->v, 240.0);
  EXPECT_FALSE(sensing::project(in, Vec3(0.1, 0, -1)));
  EXPECT_FALSE(sensing::project(in, Vec3(10, 0, 1)));
}

TEST(Project, RadialDistortionScalesNormalizedCoordinates) {
  sensing::CameraIntrinsics in;
  in.k1 = 0.1;
  in.k2 = 0.01;
  const auto px = sensing::project(in, Vec3(0.5, 0, 1));
  const double scale = 1 + 0.1 * 0.25 + 0.01 * 0.0625;
  EXPECT_NEAR(px->u, 160 + 160 * 0.5 * scale, 1e-12);
}

TEST(Intrinsics, Validation) {
  sensing::CameraIntrinsics in;
  in.fx = 0;
  EXPECT_THROW(in.validate(), ValidationError);
  in = {};
  in.fov = 4.0;
  EXPECT_THROW(in.validate(), ValidationError);
}

TEST(Rig, PresetsAndJsonRoundTrip) {
  EXPECT_EQ(sensing::CameraRig::preset(sensing::RigPreset::Mono).cameras.size(), 1u);
  EXPECT_EQ(sensing::CameraRig::preset(sensing::RigPreset::Stereo).cameras.size(), 2u);
  EXPECT_EQ(sensing::CameraRig::preset(sensing::RigPreset::Panoramic).cameras.size(), 4u);
  const auto dual = sensing::CameraRig::preset(sensing::RigPreset::Dual);
  ASSERT_EQ(dual.cameras.size(), 2u);
  // Front looks along +z, back along -z, both at the tips.
  EXPECT_NEAR(dual.cameras[0].mount.rotate(Vec3::UnitZ()).z(), 1.0, 1e-12);
  EXPECT_NEAR(dual.cameras[1].mount.rotate(Vec3::UnitZ()).z(), -1.0, 1e-12);
  EXPECT_NEAR(dual.cameras[0].mount.translation().z(), 0.013, 1e-12);

  const auto dir = capsim::testing::scratch_dir("rig");
  const auto pano = sensing::CameraRig::preset(sensing::RigPreset::Panoramic);
  sensing::save_rig(pano, dir / "r.json");
  const auto back = sensing::load_rig(dir / "r.json");
  ASSERT_EQ(back.cameras.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LT((back.cameras[i].mount.translation() - pano.cameras[i].mount.translation()).norm(), 1e-15);
    EXPECT_EQ(back.cameras[i].intrinsics.fx, pano.cameras[i].intrinsics.fx);
  }
  EXPECT_THROW(sensing::rig_preset_from_string("octo"), ValidationError);
}

TEST(Sees, OcclusionByNearerWall) {
  // Two parallel plates; the camera at the origin looks up +z through the lower one.
  auto a = fixtures::make_plane_grid(5, 5, 0.01, Vec3(-0.02, -0.02, 0.01));
  auto b = fixtures::make_plane_grid(5, 5, 0.01, Vec3(-0.02, -0.02, 0.03));
  std::vector<Vec3> v = a.vertices();
  std::vector<Triangle> t = a.triangles();
  const auto off = static_cast<std::uint32_t>(v.size());
  for (const auto& p : b.vertices()) v.push_back(p);
  for (auto tri : b.triangles()) t.push_back({tri[0] + off, tri[1] + off, tri[2] + off});
  const TriMesh both(v, t);
  const sensing::CameraIntrinsics in;
  EXPECT_TRUE(sensing::sees(both, {}, in, Vec3(0, 0, 0.01)));
  EXPECT_FALSE(sensing::sees(both, {}, in, Vec3(0, 0, 0.03)));
  EXPECT_FALSE(sensing::sees(both, {}, in, Vec3(0, 0, -0.01)));  // behind the camera
}

TEST(Sees, RangeIsEuclidean) {
  const auto plane = fixtures::make_plane_grid(3, 3, 0.2, Vec3(-0.2, -0.2, 0.0));
  sensing::CameraIntrinsics in;
  in.max_range = 0.05;
  const RigidTransform cam = RigidTransform::from_translation(Vec3(0, 0, -0.045));
  // Straight ahead at 45 mm: in range. Off-axis at z-depth 45 mm but 53 mm away: out.
  EXPECT_TRUE(sensing::sees(plane, cam, in, Vec3(0, 0, 0)));
  EXPECT_FALSE(sensing::sees(plane, cam, in, Vec3(0.028, 0, 0)));
}

TEST(Visibility, MatchesExhaustiveRayCasting) {
  const auto organ = fixtures::make_bent_tube(0.015, 0.05, 0.04, 1.3, 0.05, 20, 20);
  Gen g(51);
  for (int k = 0; k < 10; ++k) {
    const Vec3 c(g.uniform(-0.005, 0.005), g.uniform(-0.005, 0.005), g.uniform(0.005, 0.05));
    const RigidTransform pose(g.small_rotation(0.5), c);
    for (auto preset : {sensing::RigPreset::Dual, sensing::RigPreset::Panoramic}) {
      const auto rig = sensing::CameraRig::preset(preset);
      EXPECT_EQ(sensing::visible_vertices(organ.mesh, pose, rig),
                capsim::testing::brute_visible(organ.mesh, pose, rig));
    }
  }
}

TEST(Coverage, MarkIsIdempotentAndMonotone) {
  sensing::CoverageMap map(10);
  const std::vector<std::uint32_t> a = {1, 2, 3};
  const std::vector<std::uint32_t> b = {3, 4};
  EXPECT_EQ(map.count_new(a), 3u);
  EXPECT_EQ(map.mark(a), 3u);
  EXPECT_EQ(map.mark(a), 0u);
  EXPECT_EQ(map.mark(b), 1u);
  EXPECT_DOUBLE_EQ(sensing::coverage_fraction(map), 0.4);
  const std::vector<std::uint32_t> bad = {10};
  EXPECT_THROW(map.mark(bad), DimensionError);
  map.reset();
  EXPECT_EQ(map.covered(), 0u);
  EXPECT_THROW(sensing::coverage_fraction(sensing::CoverageMap(0)), DomainError);
}

TEST(Coverage, RewardScalesIncrement) {
  EXPECT_DOUBLE_EQ(sensing::coverage_reward(0.5, 0.25), 1.25);
  EXPECT_DOUBLE_EQ(sensing::coverage_reward(0.5, 0.25, 2.0), 0.5);
  EXPECT_THROW(sensing::coverage_reward(0.2, 0.3), DomainError);
  EXPECT_THROW(sensing::coverage_reward(1.2, 0.3), DomainError);
}

TEST(Planner, PicksMostNewVerticesFirstOnTies) {
  const auto tube = fixtures::make_tube(0.015, 0.25, 24, 30);
  const auto rig = sensing::CameraRig::preset(sensing::RigPreset::Mono);
  sensing::CoverageMap map(tube.mesh.vertex_count());
  const RigidTransform start = RigidTransform::from_translation(Vec3(0, 0, 0.05));
  const auto actions = sensing::axis_actions(0.005);
  const auto choice = sensing::greedy_plan_step(start, 0.0055, 0.0075, tube.mesh, rig, map, actions);
  // Oracle: evaluate every action by brute force.
  std::size_t best = 0, best_n = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const RigidTransform moved(start.rotation(), start.translation() + actions[i].translation);
    const auto n = capsim::testing::brute_visible(tube.mesh, moved, rig).size();
    if (n > best_n) {
      best_n = n;
      best = i;
    }
  }
  EXPECT_EQ(choice.action, best);
  EXPECT_EQ(choice.new_vertices, best_n);
  EXPECT_FALSE(choice.blocked);
}

TEST(Planner, BlockedMoveKeepsPose) {
  const auto tube = fixtures::make_tube(0.015, 0.25, 24, 30);
  const auto rig = sensing::CameraRig::preset(sensing::RigPreset::Mono);
  sensing::CoverageMap map(tube.mesh.vertex_count());
  const RigidTransform start = RigidTransform::from_translation(Vec3(0.009, 0, 0.1));
  const std::vector<sensing::PlannerAction> push = {{"+x", Vec3(0.005, 0, 0)}};
  const auto choice = sensing::greedy_plan_step(start, 0.0055, 0.0075, tube.mesh, rig, map, push);
  EXPECT_TRUE(choice.blocked);
  EXPECT_EQ(choice.pose.translation(), start.translation());
  EXPECT_EQ(choice.visible, sensing::visible_vertices(tube.mesh, start, rig));
}
