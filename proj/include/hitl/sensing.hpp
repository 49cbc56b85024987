#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "hitl/common.hpp"
#include "hitl/sim.hpp"

// Noisy observation of enemy drones and per-enemy track fusion.
namespace hitl::sensing {

struct SensorConfig {
  double r_gr = 3000.0;
  double r_ad = 500.0;
  double r_eo = 250.0;
  double r_rf = 2000.0;
  double r_eo_payload = 125.0;
  double rho_gr = kPi / 2.0;
  double rho_ad = kPi / 2.0;
  double rho_eo = kPi / 3.0;
  double pr_gr = 0.95;
  double pr_dr = 0.95;
  double pr_eo = 0.95;
  double pr_rf = 0.95;
  double d_de = 10.0;         // along line of sight, meters
  double d_ae = kPi / 180.0;  // across line of sight, scaled by range

  void validate() const;
};

enum class SensorKind { kGroundRadar, kDroneRadar, kElectroOptic, kRadioFrequency };

std::string_view to_string(SensorKind k);

struct Detection {
  std::size_t enemy_index = 0;
  Vec2 observed_pos;
  SensorKind sensor_kind = SensorKind::kGroundRadar;
  std::optional<int> payload_seen;
};

struct TrackEstimate {
  std::size_t enemy_index = 0;
  Vec2 est_pos;
  int age = 0;
  bool stale = false;
  std::optional<int> payload;  // last payload identified by an EO sensor
  bool rf_seen = false;        // ever detected by RF, which implies GCS control
};

// Offset from explicit uniform(-0.5, 0.5) draws.
Vec2 noise_offset(Vec2 delta_p, const SensorConfig& cfg, double u_along, double u_across);
Vec2 noise_offset(Vec2 delta_p, const SensorConfig& cfg, Rng& rng);

// Pure geometric visibility: within range and inside the field of view
// centered on heading. A fov of 2*pi or more is omnidirectional.
bool in_coverage(Vec2 target_pos, Vec2 sensor_pos, double heading, double range, double fov);

std::optional<Vec2> detect(Vec2 target_pos, Vec2 sensor_pos, double sensor_heading, double range,
                           double fov, double prob, const SensorConfig& cfg, Rng& rng);

std::optional<Detection> detect_ground_radar(const sim::GroundRadar& gr, std::size_t enemy_index,
                                             const sim::EnemyDrone& enemy, const SensorConfig& cfg,
                                             Rng& rng);
std::optional<Detection> detect_drone_radar(const sim::AllyDrone& drone, std::size_t enemy_index,
                                            const sim::EnemyDrone& enemy, const SensorConfig& cfg,
                                            Rng& rng);
std::optional<Detection> detect_eo(const sim::AllyDrone& drone, std::size_t enemy_index,
                                   const sim::EnemyDrone& enemy, const SensorConfig& cfg, Rng& rng);
std::optional<Detection> detect_rf(Vec2 sensor_pos, std::size_t enemy_index,
                                   const sim::EnemyDrone& enemy, const SensorConfig& cfg, Rng& rng);

// Every sensor on the ally side against every functional enemy.
std::vector<Detection> observe(const sim::WorldState& world, const SensorConfig& cfg, Rng& rng);

// Output is sorted by enemy index.
std::vector<TrackEstimate> fuse(const std::vector<Detection>& detections,
                                const std::vector<TrackEstimate>& previous);

}  // namespace hitl::sensing
