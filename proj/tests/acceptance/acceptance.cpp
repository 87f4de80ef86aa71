// Prints one PASS/FAIL line per acceptance criterion and exits non-zero if any fails.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "capsim/arm.hpp"
#include "capsim/dynamics.hpp"
#include "capsim/errors.hpp"
#include "capsim/friction.hpp"
#include "capsim/magnetics.hpp"
#include "capsim/mesh_fixtures.hpp"
#include "capsim/mesh_io.hpp"
#include "capsim/metrics.hpp"
#include "capsim/scenario.hpp"
#include "capsim/sensing.hpp"
#include "capsim/simulation.hpp"
#include "support.hpp"

using namespace capsim;
using capsim::testing::Gen;
using capsim::testing::slurp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void check(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("threw: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += fmt::format("; over the {:g} s budget", budget_s);
  }
  if (!o.pass) ++failures;
  fmt::print("{} {} ({}; {:.3f} s)\n", o.pass ? "PASS" : "FAIL", name, o.detail, secs);
  std::fflush(stdout);
}

// --- Magnetics ---------------------------------------------------------------------

Outcome magnetics_oracle() {
  const magnetics::MagneticDipole a{Vec3::UnitZ(), Vec3::Zero()};
  const magnetics::MagneticDipole b{Vec3::UnitZ(), Vec3(0, 0, 1)};
  const std::vector<magnetics::MagneticDipole> src_a = {a}, src_b = {b};
  // Closed form for coaxial moments: F = 3 mu0 m1 m2 / (2 pi r^4), attractive.
  const double closed = 3.0 * magnetics::kMu0 / (2.0 * std::numbers::pi);
  const Vec3 f = magnetics::dipole_force(b, magnetics::field_of(src_a));
  const double rel = std::abs(f.norm() - 6e-7) / 6e-7;
  const double closed_rel = std::abs(closed - 6e-7) / 6e-7;
  bool ok = rel < 1e-3 && closed_rel < 1e-3 && f.z() < 0.0;

  Gen g(2024);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const magnetics::MagneticDipole p{g.unit() * g.uniform(0.01, 10.0), g.vec(-0.2, 0.2)};
    const magnetics::MagneticDipole q{g.unit() * g.uniform(0.01, 10.0), p.position + g.unit() * g.uniform(0.05, 0.4)};
    const std::vector<magnetics::MagneticDipole> sp = {p}, sq = {q};
    const Vec3 fpq = magnetics::dipole_force(q, magnetics::field_of(sp));
    const Vec3 fqp = magnetics::dipole_force(p, magnetics::field_of(sq));
    worst = std::max(worst, (fpq + fqp).norm() / fpq.norm());
  }
  ok = ok && worst < 1e-6;
  return {ok, fmt::format("|F|={:.9g} N rel.err {:.2e}; worst 3rd-law residual {:.2e}", f.norm(), rel, worst)};
}

// --- Friction ----------------------------------------------------------------------

Outcome friction_fit() {
  const friction::CurveParams truth;
  std::vector<friction::FrictionSample> samples;
  for (int i = 0; i <= 120; ++i) {
    const double x = 0.25 * i;
    // Independent evaluation of the reference curve.
    const double y = x <= 1.0 ? 100.0 : 55.04 * std::log(0.23 * x + 1.04) + 100.0;
    samples.push_back({x, y});
  }
  const auto fit = friction::fit_friction_params(samples);
  const auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
  const double worst = std::max({rel(fit.params.a, 55.04), rel(fit.params.b, 0.23), rel(fit.params.c, 1.04),
                                 rel(fit.params.C, 100.0)});
  bool flat = true;
  for (int i = 0; i <= 1000; ++i) flat = flat && friction::total_friction_curve(i / 1000.0, truth) == 100.0;
  return {worst < 0.01 && flat,
          fmt::format("a={:.4f} b={:.4f} c={:.4f} C={:.4f}; worst rel.err {:.2e}; constant branch exact: {}",
                      fit.params.a, fit.params.b, fit.params.c, fit.params.C, worst, flat)};
}

// --- Metrics -----------------------------------------------------------------------

Outcome metrics_suite() {
  Gen g(7);
  metrics::Trajectory gt;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
  for (int i = 0; i < 500; ++i) {
    p += g.vec(-0.01, 0.01);
    q = (g.small_rotation(0.1) * q).normalized();
    gt.samples.push_back({0.01 * i, RigidTransform(q, p)});
  }
  auto copy = gt;
  const auto T = g.pose(3.0);
  for (auto& s : copy.samples) s.pose = T * s.pose;
  const double ate = metrics::ate(copy, gt).mean;

  double rpe_worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto p0 = g.pose(1.0), rel = g.pose(0.1), q0 = g.pose(1.0);
    const double angle = g.uniform(0.0, std::numbers::pi - 1e-3);
    const RigidTransform bump(Quat(Eigen::AngleAxisd(angle, g.unit())), Vec3::Zero());
    const auto err = metrics::rpe_pair(q0, q0 * rel * bump, p0, p0 * rel);
    rpe_worst = std::max(rpe_worst, std::abs(err.rot - angle));
  }

  int icp_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Gen tg(5000 + static_cast<std::uint64_t>(trial));
    std::vector<Vec3> fixed;
    for (int i = 0; i < 1000; ++i) fixed.push_back(tg.vec(-0.05, 0.05));
    double diameter = 0.0;
    Vec3 lo = fixed[0], hi = fixed[0];
    for (const auto& v : fixed) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    diameter = (hi - lo).norm();
    const RigidTransform pert(tg.small_rotation(10.0 * std::numbers::pi / 180.0),
                              tg.unit() * tg.uniform(0.0, 0.05 * diameter));
    std::vector<Vec3> moving;
    for (const auto& v : fixed) moving.push_back(pert.apply(v));
    if (metrics::icp_align(moving, fixed).rmse < 1e-6) ++icp_ok;
  }
  const bool ok = ate < 1e-9 && rpe_worst < 1e-9 && icp_ok >= 95;
  return {ok, fmt::format("ATE {:.2e} m; worst RPE_rot error {:.2e} rad; ICP {}/100", ate, rpe_worst, icp_ok)};
}

// --- Coverage ----------------------------------------------------------------------

std::filesystem::path write_tube(const std::filesystem::path& dir) {
  const auto tube = fixtures::make_tube(0.015, 0.25, 48, 50);
  write_ply(dir / "tube.ply", tube.mesh.vertices(), tube.mesh.triangles());
  write_segments(dir / "tube.json", tube.segments);
  return dir / "tube.ply";
}

scenario::ScenarioConfig tube_scenario(const std::filesystem::path& dir, const jsonio::Json& extra) {
  write_tube(dir);
  jsonio::Json doc = {
      {"mesh", "tube.ply"},
      {"segments", "tube.json"},
      {"capsule", {{"pose", {{"position", {0.0, 0.0, 0.05}}, {"quaternion", {0.0, 0.0, 0.0, 1.0}}}}}},
      {"camera_rig", "dual"}};
  doc.update(extra);
  jsonio::write_file(dir / "scenario.json", doc);
  return scenario::load_scenario(dir / "scenario.json");
}

Outcome coverage_greedy() {
  const auto dir = capsim::testing::scratch_dir("accept_cov");
  const auto cfg = tube_scenario(dir, {{"controller", "greedy"}, {"episode_length", 2.0}});
  const auto rec = sim::run_simulation(cfg, {{}, dir / "out", {}});
  const TriMesh mesh = [&] {
    const auto d = read_mesh(cfg.mesh);
    return TriMesh(d.vertices, d.triangles);
  }();
  std::istringstream csv(slurp(rec.coverage));
  std::string line;
  std::getline(csv, line);
  const double c0 = 0.0;
  double prev = c0;
  bool monotone = true;
  std::uint64_t reach_step = 0;
  std::uint64_t row = 0;
  while (std::getline(csv, line)) {
    ++row;
    const double c = std::stod(line.substr(line.rfind(',') + 1));
    monotone = monotone && c >= prev;
    if (reach_step == 0 && c >= 0.9) reach_step = row;
    prev = c;
  }
  const double identity = std::abs(rec.reward_sum - 5.0 * (rec.final_coverage - c0));
  const bool ok = mesh.vertex_count() >= 2000 && rec.steps <= 2000 && reach_step > 0 && monotone && identity <= 1e-12;
  return {ok, fmt::format("{} vertices; C={:.4f} after {} steps, C>=0.9 at step {}; monotone {}; |sum r - 5 dC|={:.1e}",
                          mesh.vertex_count(), rec.final_coverage, rec.steps, reach_step, monotone, identity)};
}

// --- Dynamics ----------------------------------------------------------------------

double pull_displacement(double dt) {
  dynamics::World w;
  w.magnets.push_back({Vec3(0, 0, 5.0), Vec3(0, 0, 0.15)});
  auto s = dynamics::CapsuleState::make();
  const auto n = static_cast<int>(std::lround(1.0 / dt));
  for (int i = 0; i < n; ++i) s = dynamics::step(s, w, dt).first;
  return s.pose.translation().norm();
}

Outcome dynamics_checks() {
  const auto dir = capsim::testing::scratch_dir("accept_dyn");
  const auto cfg = tube_scenario(
      dir, {{"episode_length", 1.0},
            {"seed", 11},
            {"noise", {{"sigma", 5e-4}}},
            {"magnets", jsonio::Json::array({{{"moment", {0.0, 0.0, 10.0}},
                                              {"pose", {{"position", {0.0, 0.08, 0.06}}, {"quaternion", {0, 0, 0, 1}}}}}})}});
  const auto a = sim::run_simulation(cfg, {{}, dir / "a", {}});
  const auto b = sim::run_simulation(cfg, {{}, dir / "b", {}});
  const bool same = slurp(a.trajectory) == slurp(b.trajectory) && slurp(*a.noisy_trajectory) == slurp(*b.noisy_trajectory) &&
                    !slurp(a.trajectory).empty();
  const double d1 = pull_displacement(1e-3);
  const double d2 = pull_displacement(5e-4);
  const double rel = std::abs(d1 - d2) / d1;
  return {same && rel < 0.01 && d1 > 1e-4,
          fmt::format("byte-identical logs {}; pull displacement {:.6g} m vs {:.6g} m, rel.change {:.2e}", same, d1, d2,
                      rel)};
}

// --- Kinematics --------------------------------------------------------------------

Outcome kinematics() {
  const auto m = arm::example_arm();
  Gen g(99);
  int ok = 0;
  for (int k = 0; k < 100; ++k) {
    arm::JointVector q;
    for (int i = 0; i < 7; ++i) q[i] = g.uniform(m.joints[i].min, m.joints[i].max);
    const auto target = arm::forward_kinematics(m, q);
    try {
      const auto r = arm::inverse_kinematics(m, target, m.mid_configuration());
      const auto got = arm::forward_kinematics(m, r.q);
      if ((got.translation() - target.translation()).norm() < 1e-4 &&
          angular_distance(got.rotation(), target.rotation()) < 1e-3) {
        ++ok;
      }
    } catch (const UnreachableError&) {
    }
  }
  arm::ArmModel zero;
  zero.joints.assign(7, arm::DhJoint{});
  const bool identity = arm::forward_kinematics_matrix(zero, arm::JointVector::Zero()) == Mat4::Identity();
  return {ok >= 95 && identity, fmt::format("IK {}/100; zero-DH FK exact identity {}", ok, identity)};
}

// --- Visibility --------------------------------------------------------------------

Outcome visibility() {
  const auto organ = fixtures::make_bent_tube(0.015, 0.08, 0.06, std::numbers::pi / 2, 0.08, 40, 25);
  const auto rig = sensing::CameraRig::preset(sensing::RigPreset::Dual);
  Gen g(31);
  int poses = 0, mismatches = 0;
  std::size_t seen = 0;
  for (int k = 0; k < 20; ++k) {
    const RigidTransform pose(g.small_rotation(0.5),
                              Vec3(g.uniform(-0.005, 0.005), g.uniform(-0.005, 0.005), g.uniform(0.01, 0.07)));
    const auto fast = sensing::visible_vertices(organ.mesh, pose, rig);
    const auto slow = capsim::testing::brute_visible(organ.mesh, pose, rig);
    ++poses;
    seen += slow.size();
    if (fast != slow) ++mismatches;
  }
  return {organ.mesh.vertex_count() == 1000 && mismatches == 0 && seen > 0,
          fmt::format("{} vertices; {} poses, {} mismatches, {} visible in total", organ.mesh.vertex_count(), poses,
                      mismatches, seen)};
}

}  // namespace

int main() {
  check("magnetics: coaxial dipole force and Newton's third law", 1.0, magnetics_oracle);
  check("friction: fit round-trip and constant branch", 1.0, friction_fit);
  check("metrics: ATE, RPE_rot and ICP", 30.0, metrics_suite);
  check("coverage: greedy planner reaches 0.9, monotone, reward identity", 120.0, coverage_greedy);
  check("dynamics: determinism and dt convergence", 60.0, dynamics_checks);
  check("kinematics: IK round-trip and zero-DH identity", 30.0, kinematics);
  check("visibility: matches exhaustive ray casting", 10.0, visibility);
  fmt::print("{}\n", failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures));
  return failures == 0 ? 0 : 1;
}
