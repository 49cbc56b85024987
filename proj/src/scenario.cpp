#include "hitl/scenario.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hitl::harness {

std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::kRandom: return "random";
    case ScenarioKind::kOverloaded: return "overloaded";
    case ScenarioKind::kDecoy: return "decoy";
    case ScenarioKind::kCustom: return "custom";
  }
  return "?";
}

ScenarioKind scenario_kind_from_string(std::string_view s) {
  if (s == "random") return ScenarioKind::kRandom;
  if (s == "overloaded") return ScenarioKind::kOverloaded;
  if (s == "decoy") return ScenarioKind::kDecoy;
  if (s == "custom") return ScenarioKind::kCustom;
  throw std::invalid_argument("unknown scenario kind: " + std::string(s));
}

ScenarioSpec ScenarioSpec::make(ScenarioKind kind) {
  ScenarioSpec s;
  s.kind = kind;
  switch (kind) {
    case ScenarioKind::kRandom:
    case ScenarioKind::kCustom:
      break;
    case ScenarioKind::kOverloaded:
      s.n_ad = 50;
      s.n_ed = 100;
      s.effector = hier::Effector::kJamIfRf;
      // A tight formation: about 150 m across and 100 m deep.
      s.front_width = 0.05;
      s.front_max = 3100.0;
      break;
    case ScenarioKind::kDecoy:
      s.n_ad = 5;
      s.n_ed = 3;
      break;
  }
  return s;
}

hier::ControlConfig ScenarioSpec::control() const {
  hier::ControlConfig c = hier::ControlConfig::from(world);
  c.effector = effector;
  if (fire_range) c.fire_range = *fire_range;
  c.arena_min = 0.0;
  c.arena_max = arena;
  return c;
}

void ScenarioSpec::validate() const {
  world.validate();
  sensors.validate();
  if (kind == ScenarioKind::kCustom) {
    if (!custom) throw std::invalid_argument("custom scenario needs an initial world");
    return;
  }
  if (n_ad < 1 || n_ed < 1) throw std::invalid_argument("scenario needs at least one ally and one enemy");
  if (kind == ScenarioKind::kDecoy && n_ed < 2) throw std::invalid_argument("decoy scenario needs 2+ enemies");
  if (fire_range && !(*fire_range >= 0.0)) throw std::invalid_argument("fire_range must be >= 0");
  if (!(arena > 0.0)) throw std::invalid_argument("arena must be positive");
  if (!(ally_ring_min >= 0.0 && ally_ring_max >= ally_ring_min)) throw std::invalid_argument("bad ally ring");
  if (!(enemy_gcs_prob >= 0.0 && enemy_gcs_prob <= 1.0)) throw std::invalid_argument("enemy_gcs_prob not in [0,1]");
  if (!(decoy_turn > 0.0 && decoy_turn < decoy_spawn)) throw std::invalid_argument("decoy_turn must be in (0, decoy_spawn)");
}

namespace {

Vec2 perimeter_point(double arena, Rng& rng) {
  const double s = rng.uniform(0.0, 4.0 * arena);
  const int side = std::min(3, static_cast<int>(s / arena));
  const double t = s - side * arena;
  switch (side) {
    case 0: return {t, 0.0};
    case 1: return {arena, t};
    case 2: return {arena - t, arena};
    default: return {0.0, arena - t};
  }
}


std::vector<sim::AllyDrone> ring_allies(const ScenarioSpec& spec, Rng& rng) {
  std::vector<sim::AllyDrone> allies;
  for (int i = 0; i < spec.n_ad; ++i) {
    sim::AllyDrone a;
    a.p = spec.world.p_ra + Vec2::polar(rng.uniform(spec.ally_ring_min, spec.ally_ring_max), rng.uniform(-kPi, kPi));
    a.phi = rng.uniform(-kPi, kPi);
    a.p_gc = spec.world.p_ra;
    allies.push_back(a);
  }
  return allies;
}

std::vector<sim::GroundRadar> radars(const ScenarioSpec& spec) {
  std::vector<sim::GroundRadar> out;
  for (Vec2 p : spec.ground_radars) out.push_back(sim::GroundRadar{p, 0.0});
  return out;
}

sim::WorldState random_world(const ScenarioSpec& spec, Rng& rng) {
  sim::WorldState w;
  w.allies = ring_allies(spec, rng);
  const bool front = spec.front_width > 0.0;
  const double axis = front ? rng.uniform(-kPi, kPi) : 0.0;
  for (int j = 0; j < spec.n_ed; ++j) {
    sim::EnemyDrone e;
    if (front) {
      const double ang = axis + rng.uniform(-0.5, 0.5) * spec.front_width;
      e.p = spec.world.p_ra + Vec2::polar(rng.uniform(spec.front_min, spec.front_max), ang);
    } else {
      e.p = perimeter_point(spec.arena, rng);
    }
    e.payload = 1 + static_cast<int>(rng.index(3));
    e.gcs_controlled = rng.bernoulli(spec.enemy_gcs_prob);
    e.p_egcs = (e.p + spec.world.p_ra) / 2.0;
    w.enemies.push_back(e);
  }
  w.radars = radars(spec);
  return w;
}

sim::WorldState decoy_world(const ScenarioSpec& spec, Rng& rng) {
  sim::WorldState w;
  w.allies = ring_allies(spec, rng);
  const Vec2 ra = spec.world.p_ra;
  const double axis = rng.uniform(-kPi, kPi);
  const int n_decoys = spec.n_ed - 1;
  for (int j = 0; j < n_decoys; ++j) {
    const double frac = n_decoys == 1 ? 0.0 : 2.0 * j / (n_decoys - 1) - 1.0;
    const double ang = axis + frac * spec.decoy_spread;
    sim::EnemyDrone e;
    e.p = ra + Vec2::polar(spec.decoy_spawn, ang);
    e.payload = 0;
    e.gcs_controlled = true;
    e.p_egcs = e.p;
    // Feint inward, then fall back past the controller until the link drops.
    e.route = {ra + Vec2::polar(spec.decoy_turn, ang),
               ra + Vec2::polar(spec.decoy_spawn + spec.world.r_egcs + 500.0, ang)};
    w.enemies.push_back(e);
  }
  sim::EnemyDrone threat;
  const double ang = axis + spec.threat_offset + rng.uniform(-spec.threat_jitter, spec.threat_jitter);
  threat.p = ra + Vec2::polar(spec.threat_spawn, ang);
  threat.payload = 3;
  threat.gcs_controlled = false;
  threat.p_egcs = threat.p;
  w.enemies.push_back(threat);
  w.radars = radars(spec);
  return w;
}

}  // namespace

bool is_decoy(const sim::EnemyDrone& e) { return e.gcs_controlled && !e.route.empty(); }

sim::WorldState generate_scenario(const ScenarioSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case ScenarioKind::kRandom:
    case ScenarioKind::kOverloaded:
      return random_world(spec, rng);
    case ScenarioKind::kDecoy:
      return decoy_world(spec, rng);
    case ScenarioKind::kCustom:
      return *spec.custom;
  }
  throw std::logic_error("generate_scenario: unhandled kind");
}

sim::WorldState generate_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return generate_scenario(spec, rng);
}

}  // namespace hitl::harness
