#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "hitl/common.hpp"

// Ground-truth dynamics of the swarm-defense engagement.
namespace hitl::sim {

struct WorldConfig {
  Vec2 p_ra{3000.0, 3000.0};  // restricted-area center
  double r_ra = 100.0;
  double r_gc = 3000.0;
  double r_egcs = 3000.0;
  double r_n = 10.0;
  double v_max_sr = 10.0;  // m/step
  double v_max_as = 0.2;   // rad/step
  double v_max_eo = kPi;   // rad/step
  double v_max_gr = 0.2;   // rad/step
  double phi_max_eo = 300.0 / 180.0 * kPi;
  double pr_empd = 0.25;
  double gamma = 0.99;
  int timelimit = 2000;
  // When set, allies beyond r_gc of their GCS lose control and hold position.
  bool enforce_ally_gcs_range = false;

  void validate() const;
};

struct AllyDrone {
  Vec2 p;
  double phi = 0.0;
  double phi_eo = 0.0;
  bool functional = true;
  bool gcs_controlled = true;
  Vec2 p_gc;
  bool radar_enabled = true;
  bool emp_used = false;
};

struct AllyAction {
  double u_ma = 0.0;       // movement angle, [-pi, pi]
  double u_sr = 0.0;       // speed ratio, [0, 1]
  double u_heading = 0.0;  // [-1, 1]
  double u_eo = 0.0;       // [-1, 1]
  bool u_er = true;
  bool u_emp = false;
  bool u_ej = false;
  bool u_gpss = false;
  bool u_eh = false;

  void validate() const;
};

struct EnemyDrone {
  Vec2 p;
  int payload = 1;  // 0 safe, 1 unknown, 2 moderate, 3 dangerous
  bool gcs_controlled = true;
  Vec2 p_egcs;
  bool functional = true;
  // Scripted waypoints; once exhausted (or when empty) the drone heads for
  // the restricted area.
  std::vector<Vec2> route;
  std::size_t route_index = 0;
};

struct GroundRadar {
  Vec2 p;
  double phi = 0.0;
};

struct WorldState {
  std::vector<AllyDrone> allies;
  std::vector<EnemyDrone> enemies;
  std::vector<GroundRadar> radars;
  int t = 0;
  bool absorbing = true;  // 1 while running, latches to 0 on termination
};

enum class Termination { kRunning, kTimeout, kSuccess, kDefeat };

std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view s);

struct StepOutcome {
  WorldState next;
  double r_track = 0.0;
  double r_neut = 0.0;
  // Neutralization reward credited to each ally; sums to r_neut.
  std::vector<double> r_neut_by_ally;
  Termination termination = Termination::kRunning;
};

GroundRadar step_ground_radar(const GroundRadar& gr, double u, const WorldConfig& cfg);

AllyDrone step_ally(const AllyDrone& drone, const AllyAction& a, const WorldConfig& cfg, Rng& rng);

bool neutralize_enabled(const AllyAction& a, bool enemy_gcs_controlled);

// Advances one enemy along its script (or toward the restricted area).
EnemyDrone move_enemy(const EnemyDrone& enemy, const WorldConfig& cfg);

std::vector<EnemyDrone> update_enemies(const WorldState& state, std::span<const AllyAction> actions,
                                       const WorldConfig& cfg);

double tracking_reward(const WorldState& state, std::span<const AllyAction> actions);

// Per-ally terms of the neutralization reward, on pre-step flags.
std::vector<double> neutralization_reward_by_ally(const WorldState& state,
                                                  std::span<const AllyAction> actions,
                                                  const WorldConfig& cfg);

double neutralization_reward(const WorldState& state, std::span<const AllyAction> actions,
                             const WorldConfig& cfg);

Termination evaluate_termination(const WorldState& state, const WorldConfig& cfg);

// Precondition: state.absorbing. Throws std::logic_error on a terminated world.
StepOutcome step_world(const WorldState& state, std::span<const AllyAction> ally_actions,
                       std::span<const double> radar_actions, const WorldConfig& cfg, Rng& rng);

std::size_t count_functional(const std::vector<EnemyDrone>& enemies);

}  // namespace hitl::sim
