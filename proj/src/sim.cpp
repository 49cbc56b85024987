#include "hitl/sim.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace hitl {

double wrap_angle(double phi) {
  if (!std::isfinite(phi)) throw std::domain_error("wrap_angle: non-finite angle");
  constexpr double kTwoPi = 2.0 * kPi;
  // Large inputs would take many iterations; reduce first, then finish the
  // job with the iterative rule.
  if (std::abs(phi) > 64.0 * kPi) phi = std::remainder(phi, kTwoPi);
  while (phi > kPi) phi -= kTwoPi;
  while (phi < -kPi) phi += kTwoPi;
  return phi;
}

}  // namespace hitl

namespace hitl::sim {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void WorldConfig::validate() const {
  require(p_ra.finite(), "WorldConfig: p_ra must be finite");
  for (double v : {r_ra, r_gc, r_egcs, r_n, v_max_sr, v_max_as, v_max_eo, v_max_gr}) {
    require(v >= 0.0 && std::isfinite(v), "WorldConfig: radii and speeds must be >= 0");
  }
  require(phi_max_eo >= 0.0 && phi_max_eo <= 300.0 / 180.0 * kPi + 1e-12,
          "WorldConfig: phi_max_eo out of [0, 300pi/180]");
  require(in_unit(pr_empd), "WorldConfig: pr_empd must be a probability");
  require(gamma > 0.0 && gamma < 1.0, "WorldConfig: gamma must lie in (0,1)");
  require(timelimit >= 0, "WorldConfig: timelimit must be >= 0");
}

void AllyAction::validate() const {
  require(std::isfinite(u_ma) && u_ma >= -kPi && u_ma <= kPi, "AllyAction: u_ma out of [-pi, pi]");
  require(in_unit(u_sr), "AllyAction: u_sr out of [0, 1]");
  require(u_heading >= -1.0 && u_heading <= 1.0, "AllyAction: u_heading out of [-1, 1]");
  require(u_eo >= -1.0 && u_eo <= 1.0, "AllyAction: u_eo out of [-1, 1]");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kRunning: return "running";
    case Termination::kTimeout: return "timeout";
    case Termination::kSuccess: return "success";
    case Termination::kDefeat: return "defeat";
  }
  return "running";
}

Termination termination_from_string(std::string_view s) {
  if (s == "running") return Termination::kRunning;
  if (s == "timeout") return Termination::kTimeout;
  if (s == "success") return Termination::kSuccess;
  if (s == "defeat") return Termination::kDefeat;
  throw std::invalid_argument("unknown termination '" + std::string(s) + "'");
}

GroundRadar step_ground_radar(const GroundRadar& gr, double u, const WorldConfig& cfg) {
  require(std::abs(u) <= 1.0, "step_ground_radar: |u| > 1");
  GroundRadar out = gr;
  out.phi = wrap_angle(gr.phi + cfg.v_max_gr * u);
  return out;
}

AllyDrone step_ally(const AllyDrone& drone, const AllyAction& a, const WorldConfig& cfg, Rng& rng) {
  a.validate();
  if (!drone.functional) return drone;

  AllyDrone out = drone;
  if (cfg.enforce_ally_gcs_range && distance(drone.p, drone.p_gc) > cfg.r_gc) {
    out.gcs_controlled = false;
  }
  if (out.gcs_controlled || !cfg.enforce_ally_gcs_range) {
    out.p = drone.p + Vec2{std::cos(a.u_ma), std::sin(a.u_ma)} * (cfg.v_max_sr * a.u_sr);
    out.phi = wrap_angle(drone.phi + cfg.v_max_as * a.u_heading);
    out.phi_eo = std::clamp(drone.phi_eo + cfg.v_max_eo * a.u_eo, -cfg.phi_max_eo, cfg.phi_max_eo);
  }
  out.radar_enabled = a.u_er;
  out.emp_used = a.u_emp || drone.emp_used;
  if (out.emp_used) out.functional = !rng.bernoulli(cfg.pr_empd);
  return out;
}

bool neutralize_enabled(const AllyAction& a, bool enemy_gcs_controlled) {
  return a.u_emp || a.u_gpss || (enemy_gcs_controlled && a.u_ej) ||
         (enemy_gcs_controlled && a.u_eh);
}

EnemyDrone move_enemy(const EnemyDrone& enemy, const WorldConfig& cfg) {
  EnemyDrone out = enemy;
  if (!enemy.functional) return out;
  double budget = cfg.v_max_sr;
  // Spend the step's travel along the route; reaching a waypoint with budget
  // left continues toward the next one.
  while (budget > 0.0) {
    const bool scripted = out.route_index < out.route.size();
    const Vec2 goal = scripted ? out.route[out.route_index] : cfg.p_ra;
    const Vec2 d = goal - out.p;
    const double len = d.norm();
    if (len > budget) {
      out.p += d * (budget / len);
      break;
    }
    out.p = goal;
    budget -= len;
    if (!scripted) break;
    ++out.route_index;
  }
  return out;
}

std::vector<EnemyDrone> update_enemies(const WorldState& state, std::span<const AllyAction> actions,
                                       const WorldConfig& cfg) {
  require(actions.size() == state.allies.size(), "update_enemies: one action per ally required");
  std::vector<EnemyDrone> out;
  out.reserve(state.enemies.size());
  for (const EnemyDrone& e : state.enemies) {
    EnemyDrone next = e;
    if (e.functional) {
      bool hit = false;
      for (std::size_t j = 0; j < state.allies.size() && !hit; ++j) {
        const AllyDrone& ally = state.allies[j];
        hit = ally.functional && neutralize_enabled(actions[j], e.gcs_controlled) &&
              distance(e.p, ally.p) <= cfg.r_n;
      }
      const bool lost_link = e.gcs_controlled && distance(e.p, e.p_egcs) > cfg.r_egcs;
      if (hit || lost_link) {
        next.functional = false;
      } else {
        next = move_enemy(e, cfg);
      }
    }
    out.push_back(std::move(next));
  }
  return out;
}

double tracking_reward(const WorldState& state, std::span<const AllyAction> actions) {
  require(actions.size() == state.allies.size(), "tracking_reward: one action per ally required");
  double r = 0.0;
  for (std::size_t i = 0; i < state.allies.size(); ++i) {
    const AllyDrone& ally = state.allies[i];
    if (!ally.functional) continue;
    for (const EnemyDrone& e : state.enemies) {
      if (!e.functional) continue;
      r -= e.payload * std::tanh((ally.p - e.p).norm1());
    }
    r -= std::tanh(std::abs(actions[i].u_ma) + std::abs(actions[i].u_sr));
  }
  return r;
}

std::vector<double> neutralization_reward_by_ally(const WorldState& state,
                                                  std::span<const AllyAction> actions,
                                                  const WorldConfig& cfg) {
  require(actions.size() == state.allies.size(),
          "neutralization_reward: one action per ally required");
  std::vector<double> r(state.allies.size(), 0.0);
  for (std::size_t i = 0; i < state.allies.size(); ++i) {
    const AllyDrone& ally = state.allies[i];
    if (!ally.functional) continue;
    for (const EnemyDrone& e : state.enemies) {
      if (!e.functional || !neutralize_enabled(actions[i], e.gcs_controlled)) continue;
      if (distance(ally.p, e.p) <= cfg.r_n) r[i] += e.payload;
    }
  }
  return r;
}

double neutralization_reward(const WorldState& state, std::span<const AllyAction> actions,
                             const WorldConfig& cfg) {
  double total = 0.0;
  for (double v : neutralization_reward_by_ally(state, actions, cfg)) total += v;
  return total;
}

Termination evaluate_termination(const WorldState& state, const WorldConfig& cfg) {
  bool all_down = true;
  for (const EnemyDrone& e : state.enemies) {
    if (distance(e.p, cfg.p_ra) <= cfg.r_ra) return Termination::kDefeat;
    all_down = all_down && !e.functional;
  }
  if (all_down) return Termination::kSuccess;
  if (state.t > cfg.timelimit) return Termination::kTimeout;
  return Termination::kRunning;
}

StepOutcome step_world(const WorldState& state, std::span<const AllyAction> ally_actions,
                       std::span<const double> radar_actions, const WorldConfig& cfg, Rng& rng) {
  if (!state.absorbing) throw std::logic_error("step_world: world already terminated");
  require(ally_actions.size() == state.allies.size(), "step_world: one action per ally required");
  require(radar_actions.size() == state.radars.size(),
          "step_world: one action per ground radar required");

  StepOutcome out;
  out.r_track = tracking_reward(state, ally_actions);
  out.r_neut_by_ally = neutralization_reward_by_ally(state, ally_actions, cfg);
  for (double v : out.r_neut_by_ally) out.r_neut += v;

  WorldState& next = out.next;
  next.allies.reserve(state.allies.size());
  for (std::size_t i = 0; i < state.allies.size(); ++i) {
    next.allies.push_back(step_ally(state.allies[i], ally_actions[i], cfg, rng));
  }
  next.enemies = update_enemies(state, ally_actions, cfg);
  next.radars.reserve(state.radars.size());
  for (std::size_t i = 0; i < state.radars.size(); ++i) {
    next.radars.push_back(step_ground_radar(state.radars[i], radar_actions[i], cfg));
  }
  next.t = state.t + 1;
  out.termination = evaluate_termination(next, cfg);
  next.absorbing = out.termination == Termination::kRunning;
  return out;
}

std::size_t count_functional(const std::vector<EnemyDrone>& enemies) {
  return static_cast<std::size_t>(
      std::count_if(enemies.begin(), enemies.end(), [](const EnemyDrone& e) { return e.functional; }));
}

}  // namespace hitl::sim
