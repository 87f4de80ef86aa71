#include "capsim/scenario.hpp"

#include <cmath>

#include <fmt/format.h>

#include "capsim/errors.hpp"

namespace capsim::scenario {
namespace {

using jsonio::Json;
using jsonio::ObjectReader;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(field, "must be a finite number > 0");
}

void require_non_negative(double v, const std::string& field) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(field, "must be a finite number >= 0");
}

void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw MissingFileError(p.string());
}

dynamics::CapsuleState read_capsule(const Json& j) {
  ObjectReader r(j, "capsule");
  auto c = dynamics::CapsuleState::make();
  c.radius = r.get("radius", c.radius);
  c.length = r.get("length", c.length);
  c.mass = r.get("mass", c.mass);
  const double r2 = c.radius * c.radius;
  const double transverse = c.mass * (3.0 * r2 + c.length * c.length) / 12.0;
  c.inertia = r.vec3("inertia", Vec3(transverse, transverse, 0.5 * c.mass * r2));
  c.dipole_body = r.vec3("dipole", c.dipole_body);
  c.pose = r.pose("pose", c.pose);
  c.velocity = r.vec3("velocity", c.velocity);
  c.angular_velocity = r.vec3("angular_velocity", c.angular_velocity);
  r.finish();
  return c;
}

Json capsule_json(const dynamics::CapsuleState& c) {
  return {{"radius", c.radius},
          {"length", c.length},
          {"mass", c.mass},
          {"inertia", jsonio::to_json(c.inertia)},
          {"dipole", jsonio::to_json(c.dipole_body)},
          {"pose", jsonio::to_json(c.pose)},
          {"velocity", jsonio::to_json(c.velocity)},
          {"angular_velocity", jsonio::to_json(c.angular_velocity)}};
}

friction::FrictionParams read_friction(const Json& j) {
  ObjectReader r(j, "friction");
  friction::FrictionParams f;
  const auto mode = r.get<std::string>("mode", "curve");
  if (mode == "curve") f.mode = friction::FrictionMode::Curve;
  else if (mode == "components") f.mode = friction::FrictionMode::Components;
  else throw ValidationError("friction.mode", "expected \"curve\" or \"components\"");
  f.coulomb = r.get("coulomb", f.coulomb);
  f.viscosity = r.get("viscosity", f.viscosity);
  f.contact_area = r.get("contact_area", f.contact_area);
  f.skew_angle = r.get("skew_angle", f.skew_angle);
  f.curve_velocity_unit = r.get("curve_velocity_unit", f.curve_velocity_unit);
  f.curve_force_unit = r.get("curve_force_unit", f.curve_force_unit);
  if (r.has("curve")) {
    ObjectReader c(r.at("curve"), "friction.curve");
    f.curve.a = c.get("a", f.curve.a);
    f.curve.b = c.get("b", f.curve.b);
    f.curve.c = c.get("c", f.curve.c);
    f.curve.C = c.get("C", f.curve.C);
    const auto base = c.get<std::string>("log_base", "e");
    if (base == "e") f.curve.base = friction::LogBase::Natural;
    else if (base == "10") f.curve.base = friction::LogBase::Ten;
    else throw ValidationError("friction.curve.log_base", "expected \"e\" or \"10\"");
    c.finish();
  }
  r.finish();
  return f;
}

Json friction_json(const friction::FrictionParams& f) {
  return {{"mode", f.mode == friction::FrictionMode::Curve ? "curve" : "components"},
          {"coulomb", f.coulomb},
          {"viscosity", f.viscosity},
          {"contact_area", f.contact_area},
          {"skew_angle", f.skew_angle},
          {"curve_velocity_unit", f.curve_velocity_unit},
          {"curve_force_unit", f.curve_force_unit},
          {"curve",
           {{"a", f.curve.a}, {"b", f.curve.b}, {"c", f.curve.c}, {"C", f.curve.C},
            {"log_base", f.curve.base == friction::LogBase::Natural ? "e" : "10"}}}};
}

tissue::DeformationParams read_tissue(const Json& j) {
  ObjectReader r(j, "tissue");
  tissue::DeformationParams t;
  t.spring_factor = r.get("spring_factor", t.spring_factor);
  t.damping = r.get("damping", t.damping);
  t.vertex_mass = r.get("vertex_mass", t.vertex_mass);
  t.influence_radius = r.get("influence_radius", t.influence_radius);
  t.distance_unit = r.get("distance_unit", t.distance_unit);
  t.max_displacement = r.get("max_displacement", t.max_displacement);
  r.finish();
  return t;
}

Json tissue_json(const tissue::DeformationParams& t) {
  return {{"spring_factor", t.spring_factor},       {"damping", t.damping},
          {"vertex_mass", t.vertex_mass},           {"influence_radius", t.influence_radius},
          {"distance_unit", t.distance_unit},       {"max_displacement", t.max_displacement}};
}

tissue::PeristalsisParams read_peristalsis(const Json& j) {
  ObjectReader r(j, "peristalsis");
  tissue::PeristalsisParams p;
  p.enabled = r.get("enabled", p.enabled);
  p.alpha = r.get("alpha", p.alpha);
  p.beta = r.get("beta", p.beta);
  p.wave_amplitude = r.get("wave_amplitude", p.wave_amplitude);
  p.wave_frequency = r.get("wave_frequency", p.wave_frequency);
  p.wave_speed = r.get("wave_speed", p.wave_speed);
  r.finish();
  return p;
}

Json peristalsis_json(const tissue::PeristalsisParams& p) {
  return {{"enabled", p.enabled},
          {"alpha", p.alpha},
          {"beta", p.beta},
          {"wave_amplitude", p.wave_amplitude},
          {"wave_frequency", p.wave_frequency},
          {"wave_speed", p.wave_speed}};
}

tissue::MmcSchedule read_schedule(const Json& j) {
  if (!j.is_array()) throw ValidationError("mmc_schedule", "expected an array of phases");
  tissue::MmcSchedule s;
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], fmt::format("mmc_schedule[{}]", i));
    tissue::MmcPhase ph;
    ph.id = tissue::mmc_phase_from_string(r.required<std::string>("phase"));
    ph.duration_min = r.required<double>("duration_min");
    ph.strength = r.required<double>("strength");
    r.finish();
    s.phases.push_back(ph);
  }
  return s;
}

Json schedule_json(const tissue::MmcSchedule& s) {
  Json out = Json::array();
  for (const auto& ph : s.phases) {
    out.push_back({{"phase", tissue::to_string(ph.id)}, {"duration_min", ph.duration_min}, {"strength", ph.strength}});
  }
  return out;
}

dynamics::DynamicsParams read_dynamics(const Json& j) {
  ObjectReader r(j, "dynamics");
  dynamics::DynamicsParams d;
  d.dt_max = r.get("dt_max", d.dt_max);
  d.max_speed = r.get("max_speed", d.max_speed);
  d.rotational_damping = r.get("rotational_damping", d.rotational_damping);
  d.gravity = r.get("gravity", d.gravity);
  d.gravity_vector = r.vec3("gravity_vector", d.gravity_vector);
  d.magnet_min_distance = r.get("magnet_min_distance", d.magnet_min_distance);
  d.gradient_step = r.get("gradient_step", d.gradient_step);
  if (r.has("contact")) {
    ObjectReader c(r.at("contact"), "dynamics.contact");
    d.contact.stiffness = c.get("stiffness", d.contact.stiffness);
    d.contact.damping = c.get("damping", d.contact.damping);
    d.contact.axis_samples = c.get("axis_samples", d.contact.axis_samples);
    c.finish();
  }
  r.finish();
  return d;
}

Json dynamics_json(const dynamics::DynamicsParams& d) {
  return {{"dt_max", d.dt_max},
          {"max_speed", d.max_speed},
          {"rotational_damping", d.rotational_damping},
          {"gravity", d.gravity},
          {"gravity_vector", jsonio::to_json(d.gravity_vector)},
          {"magnet_min_distance", d.magnet_min_distance},
          {"gradient_step", d.gradient_step},
          {"contact",
           {{"stiffness", d.contact.stiffness},
            {"damping", d.contact.damping},
            {"axis_samples", d.contact.axis_samples}}}};
}

std::vector<MagnetConfig> read_magnets(const Json& j) {
  if (!j.is_array()) throw ValidationError("magnets", "expected an array");
  std::vector<MagnetConfig> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], fmt::format("magnets[{}]", i));
    MagnetConfig m;
    m.moment = r.vec3("moment", m.moment);
    m.arm_mounted = r.get("arm_mounted", false);
    if (m.arm_mounted && r.has("pose")) {
      throw ValidationError(r.field("pose"), "an arm-mounted magnet takes its pose from the arm");
    }
    m.pose = r.pose("pose", m.pose);
    r.finish();
    out.push_back(m);
  }
  return out;
}

Json magnets_json(const std::vector<MagnetConfig>& magnets) {
  Json out = Json::array();
  for (const auto& m : magnets) {
    Json e = {{"moment", jsonio::to_json(m.moment)}, {"arm_mounted", m.arm_mounted}};
    if (!m.arm_mounted) e["pose"] = jsonio::to_json(m.pose);
    out.push_back(e);
  }
  return out;
}

Json joints_json(const arm::JointVector& q) {
  Json out = Json::array();
  for (int i = 0; i < 7; ++i) out.push_back(q[i]);
  return out;
}

}  // namespace

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Scripted: return "scripted";
    case ControllerKind::Greedy: return "greedy";
    case ControllerKind::Teleop: return "teleop";
  }
  return "?";
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "scripted") return ControllerKind::Scripted;
  if (s == "greedy") return ControllerKind::Greedy;
  if (s == "teleop") return ControllerKind::Teleop;
  throw ValidationError("controller", "expected \"scripted\", \"greedy\" or \"teleop\", got \"" + s + "\"");
}

std::uint64_t ScenarioConfig::step_count() const {
  return static_cast<std::uint64_t>(std::llround(episode_length / dt));
}

void ScenarioConfig::validate() const {
  if (mesh.empty()) throw ValidationError("mesh", "is required");
  require_file(mesh);
  if (!segments.empty()) require_file(segments);
  if (arm && !arm->file.empty()) require_file(arm->file);
  if (!commands.empty()) require_file(commands);

  require_positive(dt, "dt");
  require_positive(dynamics.dt_max, "dynamics.dt_max");
  if (dt > dynamics.dt_max) throw ValidationError("dt", fmt::format("must not exceed dynamics.dt_max ({})", dynamics.dt_max));
  require_non_negative(episode_length, "episode_length");
  require_positive(dynamics.max_speed, "dynamics.max_speed");
  require_non_negative(dynamics.rotational_damping, "dynamics.rotational_damping");
  require_non_negative(dynamics.contact.stiffness, "dynamics.contact.stiffness");
  require_non_negative(dynamics.contact.damping, "dynamics.contact.damping");
  if (dynamics.contact.axis_samples < 1) throw ValidationError("dynamics.contact.axis_samples", "must be >= 1");
  require_positive(dynamics.magnet_min_distance, "dynamics.magnet_min_distance");
  require_positive(dynamics.gradient_step, "dynamics.gradient_step");

  require_positive(capsule.radius, "capsule.radius");
  require_positive(capsule.length, "capsule.length");
  if (capsule.length < 2.0 * capsule.radius) throw ValidationError("capsule.length", "must be >= 2 * radius");
  require_positive(capsule.mass, "capsule.mass");
  if (!(capsule.inertia.minCoeff() > 0.0)) throw ValidationError("capsule.inertia", "all moments must be > 0");

  for (std::size_t i = 0; i < magnets.size(); ++i) {
    if (magnets[i].arm_mounted && !arm) {
      throw ValidationError(fmt::format("magnets[{}].arm_mounted", i), "needs an \"arm\" section");
    }
  }

  require_non_negative(friction.coulomb, "friction.coulomb");
  require_non_negative(friction.viscosity, "friction.viscosity");
  require_positive(friction.contact_area, "friction.contact_area");
  if (!(friction.skew_angle >= 0.0 && friction.skew_angle <= 1.5707963267948966)) {
    throw ValidationError("friction.skew_angle", "must lie in [0, pi/2]");
  }
  require_positive(friction.curve_velocity_unit, "friction.curve_velocity_unit");
  require_positive(friction.curve_force_unit, "friction.curve_force_unit");
  if (!(friction.curve.c > 0.0) || friction.curve.b < 0.0) {
    throw ValidationError("friction.curve", "needs b >= 0 and c > 0 so that b x + c > 0 for x >= 0");
  }

  require_positive(tissue.vertex_mass, "tissue.vertex_mass");
  require_non_negative(tissue.spring_factor, "tissue.spring_factor");
  require_non_negative(tissue.damping, "tissue.damping");
  if (tissue.damping * dt >= 1.0) throw ValidationError("tissue.damping", "damping * dt must stay below 1");
  require_non_negative(tissue.influence_radius, "tissue.influence_radius");
  require_positive(tissue.distance_unit, "tissue.distance_unit");
  require_positive(tissue.max_displacement, "tissue.max_displacement");

  require_non_negative(peristalsis.alpha, "peristalsis.alpha");
  require_non_negative(peristalsis.beta, "peristalsis.beta");
  require_non_negative(peristalsis.wave_amplitude, "peristalsis.wave_amplitude");
  require_non_negative(peristalsis.wave_frequency, "peristalsis.wave_frequency");
  mmc_schedule.validate();
  camera_rig.validate();

  if (coverage.interval_steps < 1) throw ValidationError("coverage.interval_steps", "must be >= 1");
  require_non_negative(coverage.reward_alpha, "coverage.reward_alpha");
  require_positive(planner.step, "planner.step");
  if (!(planner.stop_coverage > 0.0 && planner.stop_coverage <= 1.0)) {
    throw ValidationError("planner.stop_coverage", "must lie in (0, 1]");
  }
  require_non_negative(noise.sigma, "noise.sigma");
  for (std::size_t i = 1; i < script.size(); ++i) {
    if (!(script[i].t > script[i - 1].t)) throw ValidationError("script", "waypoint times must strictly increase");
  }
}

ScenarioConfig scenario_from_json(const Json& j, const std::filesystem::path& base_dir) {
  ObjectReader r(j, "");
  ScenarioConfig c;
  c.mesh = resolve(base_dir, r.required<std::string>("mesh"));
  c.segments = resolve(base_dir, r.get<std::string>("segments", ""));
  if (r.has("capsule")) c.capsule = read_capsule(r.at("capsule"));
  if (r.has("magnets")) c.magnets = read_magnets(r.at("magnets"));
  if (r.has("arm")) {
    ObjectReader a(r.at("arm"), "arm");
    ArmConfig arm;
    arm.file = resolve(base_dir, a.get<std::string>("file", ""));
    if (a.has("q")) {
      const auto q = a.required<std::vector<double>>("q");
      if (q.size() != 7) throw ValidationError("arm.q", "expected 7 joint angles");
      for (int i = 0; i < 7; ++i) arm.q[i] = q[i];
    }
    a.finish();
    c.arm = arm;
  }
  if (r.has("friction")) c.friction = read_friction(r.at("friction"));
  if (r.has("tissue")) c.tissue = read_tissue(r.at("tissue"));
  if (r.has("peristalsis")) c.peristalsis = read_peristalsis(r.at("peristalsis"));
  if (r.has("mmc_schedule")) c.mmc_schedule = read_schedule(r.at("mmc_schedule"));
  if (r.has("camera_rig")) {
    const Json& rig = r.at("camera_rig");
    if (rig.is_string()) {
      const auto s = rig.get<std::string>();
      if (s.size() > 5 && s.ends_with(".json")) {
        const auto path = resolve(base_dir, s);
        require_file(path);
        c.camera_rig = sensing::load_rig(path);
      } else {
        c.camera_rig = sensing::CameraRig::preset(sensing::rig_preset_from_string(s), {}, c.capsule.length,
                                                  c.capsule.radius);
      }
    } else {
      c.camera_rig = sensing::rig_from_json(rig, "camera_rig");
    }
  } else {
    c.camera_rig = sensing::CameraRig::preset(sensing::RigPreset::Dual, {}, c.capsule.length, c.capsule.radius);
  }
  if (r.has("dynamics")) c.dynamics = read_dynamics(r.at("dynamics"));
  c.dt = r.get("dt", c.dt);
  c.episode_length = r.get("episode_length", c.episode_length);
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.controller = controller_from_string(r.get<std::string>("controller", "scripted"));
  if (r.has("script")) {
    const Json& s = r.at("script");
    if (!s.is_array()) throw ValidationError("script", "expected an array of waypoints");
    for (std::size_t i = 0; i < s.size(); ++i) {
      ObjectReader w(s[i], fmt::format("script[{}]", i));
      Waypoint wp;
      wp.t = w.required<double>("t");
      if (!w.has("pose")) throw ValidationError(w.field("pose"), "is required");
      wp.pose = w.pose("pose", {});
      w.finish();
      c.script.push_back(wp);
    }
  }
  c.commands = resolve(base_dir, r.get<std::string>("commands", ""));
  if (r.has("coverage")) {
    ObjectReader cv(r.at("coverage"), "coverage");
    c.coverage.interval_steps = cv.get("interval_steps", c.coverage.interval_steps);
    c.coverage.reward_alpha = cv.get("reward_alpha", c.coverage.reward_alpha);
    cv.finish();
  }
  if (r.has("planner")) {
    ObjectReader p(r.at("planner"), "planner");
    c.planner.step = p.get("step", c.planner.step);
    c.planner.stop_coverage = p.get("stop_coverage", c.planner.stop_coverage);
    p.finish();
  }
  if (r.has("noise")) {
    ObjectReader n(r.at("noise"), "noise");
    c.noise.sigma = n.get("sigma", c.noise.sigma);
    n.finish();
  }
  if (r.has("output")) {
    ObjectReader o(r.at("output"), "output");
    c.output.dir = o.get<std::string>("dir", c.output.dir.string());
    c.output.trajectory = o.get("trajectory", c.output.trajectory);
    c.output.coverage = o.get("coverage", c.output.coverage);
    c.output.reports = o.get("reports", c.output.reports);
    c.output.noisy_trajectory = o.get("noisy_trajectory", c.output.noisy_trajectory);
    o.finish();
  }
  r.finish();
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  const Json j = jsonio::read_file(path);
  return scenario_from_json(j, std::filesystem::absolute(path).parent_path());
}

Json to_json(const ScenarioConfig& c) {
  Json j = {{"mesh", c.mesh.string()},
            {"capsule", capsule_json(c.capsule)},
            {"magnets", magnets_json(c.magnets)},
            {"friction", friction_json(c.friction)},
            {"tissue", tissue_json(c.tissue)},
            {"peristalsis", peristalsis_json(c.peristalsis)},
            {"mmc_schedule", schedule_json(c.mmc_schedule)},
            {"camera_rig", sensing::rig_to_json(c.camera_rig)},
            {"dynamics", dynamics_json(c.dynamics)},
            {"dt", c.dt},
            {"episode_length", c.episode_length},
            {"seed", c.seed},
            {"controller", to_string(c.controller)},
            {"coverage", {{"interval_steps", c.coverage.interval_steps}, {"reward_alpha", c.coverage.reward_alpha}}},
            {"planner", {{"step", c.planner.step}, {"stop_coverage", c.planner.stop_coverage}}},
            {"noise", {{"sigma", c.noise.sigma}}},
            {"output",
             {{"dir", c.output.dir.string()},
              {"trajectory", c.output.trajectory},
              {"coverage", c.output.coverage},
              {"reports", c.output.reports},
              {"noisy_trajectory", c.output.noisy_trajectory}}}};
  if (!c.segments.empty()) j["segments"] = c.segments.string();
  if (!c.commands.empty()) j["commands"] = c.commands.string();
  if (c.arm) {
    Json a = {{"q", joints_json(c.arm->q)}};
    if (!c.arm->file.empty()) a["file"] = c.arm->file.string();
    j["arm"] = a;
  }
  if (!c.script.empty()) {
    Json s = Json::array();
    for (const auto& w : c.script) s.push_back({{"t", w.t}, {"pose", jsonio::to_json(w.pose)}});
    j["script"] = s;
  }
  return j;
}

void save_scenario(const ScenarioConfig& config, const std::filesystem::path& path) {
  jsonio::write_file(path, to_json(config));
}

std::uint64_t config_hash(const ScenarioConfig& config) {
  Json j = to_json(config);
  j.erase("output");  // where files go does not change what is in them
  const std::string canonical = j.dump();  // object keys are sorted
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash_hex(const ScenarioConfig& config) { return fmt::format("{:016x}", config_hash(config)); }

}  // namespace capsim::scenario
