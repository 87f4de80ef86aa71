#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fmt/format.h>
#include <sys/wait.h>

#include "capsim/json_io.hpp"
#include "support.hpp"

using capsim::testing::slurp;
using capsim::testing::spit;
using capsim::jsonio::Json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the built binary with stdout captured and stderr discarded.
Result run(const std::string& args) {
  const std::string cmd = fmt::format("\"{}\" {} 2>/dev/null", CAPSIM_BINARY, args);
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("simulate").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, MissingOrBadConfigExitsOne) {
  const auto dir = capsim::testing::scratch_dir("cli_missing");
  EXPECT_EQ(run("simulate --config " + q(dir / "nope.json")).code, 1);
  spit(dir / "bad.json", R"({"mesh": "x.ply", "dt": 0})");
  EXPECT_EQ(run("simulate --config " + q(dir / "bad.json")).code, 1);
}

TEST(Cli, FixturesThenSimulateThenEvaluate) {
  const auto dir = capsim::testing::scratch_dir("cli_flow");
  ASSERT_EQ(run("make-fixtures --out " + q(dir)).code, 0);
  for (const char* f : {"tube.ply", "bent_tube.ply", "stomach.ply", "arm_7dof.json", "rig_dual.json",
                        "scenario_scripted.json", "scenario_greedy.json", "scenario_teleop.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  auto doc = Json::parse(slurp(dir / "scenario_scripted.json"));
  doc["episode_length"] = 0.1;
  spit(dir / "short.json", doc.dump(2));

  const auto sim = run("simulate --config " + q(dir / "short.json") + " --out " + q(dir / "run"));
  ASSERT_EQ(sim.code, 0);
  const auto record = Json::parse(sim.out);
  EXPECT_EQ(record.at("steps").get<int>(), 100);
  const std::string traj = record.at("trajectory").get<std::string>();

  const auto ev = run("evaluate --pred " + q(traj) + " --gt " + q(traj));
  ASSERT_EQ(ev.code, 0);
  const auto report = Json::parse(ev.out);
  for (const char* k : {"ate_mean", "ate_std", "rpe_trans_mean", "rpe_rot_mean"}) {
    EXPECT_LT(report.at(k).get<double>(), 1e-9) << k;
  }

  const auto cov = run("coverage-report --config " + q(dir / "short.json") + " --trajectory " + q(traj));
  ASSERT_EQ(cov.code, 0);
  const double c = Json::parse(cov.out).at("coverage").get<double>();
  EXPECT_GE(c, 0.0);
  EXPECT_LE(c, 1.0);
}

TEST(Cli, FitFrictionRecoversCurve) {
  const auto dir = capsim::testing::scratch_dir("cli_fit");
  std::string csv = "velocity,force\n";
  for (int i = 0; i <= 80; ++i) {
    const double x = 0.25 * i;
    const double y = x <= 1.0 ? 100.0 : 55.04 * std::log(0.23 * x + 1.04) + 100.0;
    csv += fmt::format("{:.17g},{:.17g}\n", x, y);
  }
  spit(dir / "f.csv", csv);
  const auto r = run("fit-friction --csv " + q(dir / "f.csv"));
  ASSERT_EQ(r.code, 0);
  const auto fit = Json::parse(r.out);
  EXPECT_NEAR(fit.at("a").get<double>(), 55.04, 0.5504);
  EXPECT_NEAR(fit.at("b").get<double>(), 0.23, 0.0023);
  EXPECT_NEAR(fit.at("c").get<double>(), 1.04, 0.0104);
  EXPECT_NEAR(fit.at("C").get<double>(), 100.0, 1.0);

  spit(dir / "bad.csv", "speed,force\n1,2\n");
  EXPECT_EQ(run("fit-friction --csv " + q(dir / "bad.csv")).code, 1);
}

TEST(Cli, EvaluateLengthMismatchIsDomainFailure) {
  const auto dir = capsim::testing::scratch_dir("cli_eval_bad");
  spit(dir / "a.txt", "0 0 0 0 0 0 0 1\n");
  spit(dir / "b.txt", "50 0 0 0 0 0 0 1\n");
  EXPECT_EQ(run("evaluate --pred " + q(dir / "a.txt") + " --gt " + q(dir / "b.txt")).code, 2);
  spit(dir / "c.txt", "0 0 0 x 0 0 0 1\n");
  EXPECT_EQ(run("evaluate --pred " + q(dir / "c.txt") + " --gt " + q(dir / "a.txt")).code, 1);
}
