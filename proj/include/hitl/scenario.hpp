#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "hitl/common.hpp"
#include "hitl/hierarchy.hpp"
#include "hitl/sensing.hpp"
#include "hitl/sim.hpp"

namespace hitl::harness {

enum class ScenarioKind { kRandom, kOverloaded, kDecoy, kCustom };

std::string_view to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(std::string_view s);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kRandom;
  int n_ad = 1;
  int n_ed = 1;
  sim::WorldConfig world;
  sensing::SensorConfig sensors;
  hier::Effector effector = hier::Effector::kEmp;
  // Track range at which the effector is asserted; r_n when unset.
  std::optional<double> fire_range;

  double arena = 6000.0;
  std::vector<Vec2> ground_radars{{2000.0, 3000.0}};
  // Allies start on an annulus just outside the restricted-area boundary.
  double ally_ring_min = 100.0;
  double ally_ring_max = 150.0;
  // Probability that a random-scenario enemy is GCS-controlled.
  double enemy_gcs_prob = 1.0;
  // Attack front: when front_width > 0, enemies spawn on an arc of that
  // angular width at front_min..front_max from the RA, around a random axis,
  // instead of on the arena perimeter.
  double front_width = 0.0;
  double front_min = 3000.0;
  double front_max = 3500.0;

  // Decoy layout.
  double decoy_spawn = 1800.0;   // decoys start this far from the RA
  double decoy_turn = 1200.0;    // closest approach before retreating
  double decoy_spread = 0.25;    // rad either side of the decoy axis
  double threat_spawn = 3000.0;  // real threat start distance
  double threat_offset = kPi;    // angle between decoy axis and threat start
  double threat_jitter = 0.5;    // uniform +- on threat_offset

  // Custom scenario: complete initial world.
  std::optional<sim::WorldState> custom;

  static ScenarioSpec make(ScenarioKind kind);
  hier::ControlConfig control() const;
  void validate() const;
};

sim::WorldState generate_scenario(const ScenarioSpec& spec, Rng& rng);
sim::WorldState generate_scenario(const ScenarioSpec& spec, std::uint64_t seed);

// Ground truth on which enemies are decoys: GCS-controlled enemies that carry
// a retreat route.
bool is_decoy(const sim::EnemyDrone& e);

}  // namespace hitl::harness
