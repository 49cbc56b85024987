#include "hitl/sensing.hpp"

#include <map>
#include <stdexcept>

namespace hitl::sensing {

void SensorConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  for (double r : {r_gr, r_ad, r_eo, r_rf, r_eo_payload, d_de, d_ae}) {
    check(r >= 0.0, "SensorConfig: radii and error scales must be >= 0");
  }
  for (double fov : {rho_gr, rho_ad, rho_eo}) {
    check(fov >= 0.0 && fov <= 2.0 * kPi, "SensorConfig: field of view out of [0, 2pi]");
  }
  for (double p : {pr_gr, pr_dr, pr_eo, pr_rf}) {
    check(p >= 0.0 && p <= 1.0, "SensorConfig: detection probability out of [0, 1]");
  }
}

std::string_view to_string(SensorKind k) {
  switch (k) {
    case SensorKind::kGroundRadar: return "gr";
    case SensorKind::kDroneRadar: return "radar";
    case SensorKind::kElectroOptic: return "eo";
    case SensorKind::kRadioFrequency: return "rf";
  }
  return "gr";
}

Vec2 noise_offset(Vec2 delta_p, const SensorConfig& cfg, double u_along, double u_across) {
  const double range = delta_p.norm();
  if (range == 0.0) return {};
  const Vec2 along = delta_p / range * (cfg.d_de * u_along);
  const Vec2 across = delta_p.perp() * (cfg.d_ae * u_across);
  return along + across;
}

Vec2 noise_offset(Vec2 delta_p, const SensorConfig& cfg, Rng& rng) {
  const double u_along = rng.uniform(-0.5, 0.5);
  const double u_across = rng.uniform(-0.5, 0.5);
  return noise_offset(delta_p, cfg, u_along, u_across);
}

bool in_coverage(Vec2 target_pos, Vec2 sensor_pos, double heading, double range, double fov) {
  const Vec2 d = target_pos - sensor_pos;
  if (d.norm() > range) return false;
  if (fov >= 2.0 * kPi || (d.x == 0.0 && d.y == 0.0)) return true;
  const double rel = wrap_angle(d.bearing() - heading);
  return rel >= -fov / 2.0 && rel <= fov / 2.0;
}

std::optional<Vec2> detect(Vec2 target_pos, Vec2 sensor_pos, double sensor_heading, double range,
                           double fov, double prob, const SensorConfig& cfg, Rng& rng) {
  if (fov < 0.0 || fov > 2.0 * kPi) throw std::invalid_argument("detect: fov out of [0, 2pi]");
  if (!in_coverage(target_pos, sensor_pos, sensor_heading, range, fov)) return std::nullopt;
  if (!rng.bernoulli(prob)) return std::nullopt;
  return target_pos + noise_offset(target_pos - sensor_pos, cfg, rng);
}

namespace {

std::optional<Detection> as_detection(std::optional<Vec2> pos, std::size_t enemy_index,
                                      SensorKind kind) {
  if (!pos) return std::nullopt;
  return Detection{enemy_index, *pos, kind, std::nullopt};
}

}  // namespace

std::optional<Detection> detect_ground_radar(const sim::GroundRadar& gr, std::size_t enemy_index,
                                             const sim::EnemyDrone& enemy, const SensorConfig& cfg,
                                             Rng& rng) {
  return as_detection(detect(enemy.p, gr.p, gr.phi, cfg.r_gr, cfg.rho_gr, cfg.pr_gr, cfg, rng),
                      enemy_index, SensorKind::kGroundRadar);
}

std::optional<Detection> detect_drone_radar(const sim::AllyDrone& drone, std::size_t enemy_index,
                                            const sim::EnemyDrone& enemy, const SensorConfig& cfg,
                                            Rng& rng) {
  if (!drone.radar_enabled) return std::nullopt;
  return as_detection(
      detect(enemy.p, drone.p, drone.phi, cfg.r_ad, cfg.rho_ad, cfg.pr_dr, cfg, rng), enemy_index,
      SensorKind::kDroneRadar);
}

std::optional<Detection> detect_eo(const sim::AllyDrone& drone, std::size_t enemy_index,
                                   const sim::EnemyDrone& enemy, const SensorConfig& cfg, Rng& rng) {
  const double heading = wrap_angle(drone.phi + drone.phi_eo);
  auto det = as_detection(detect(enemy.p, drone.p, heading, cfg.r_eo, cfg.rho_eo, cfg.pr_eo, cfg, rng),
                          enemy_index, SensorKind::kElectroOptic);
  if (det && distance(enemy.p, drone.p) <= cfg.r_eo_payload) det->payload_seen = enemy.payload;
  return det;
}

std::optional<Detection> detect_rf(Vec2 sensor_pos, std::size_t enemy_index,
                                   const sim::EnemyDrone& enemy, const SensorConfig& cfg, Rng& rng) {
  if (!enemy.gcs_controlled) return std::nullopt;
  return as_detection(detect(enemy.p, sensor_pos, 0.0, cfg.r_rf, 2.0 * kPi, cfg.pr_rf, cfg, rng),
                      enemy_index, SensorKind::kRadioFrequency);
}

std::vector<Detection> observe(const sim::WorldState& world, const SensorConfig& cfg, Rng& rng) {
  std::vector<Detection> out;
  auto keep = [&out](std::optional<Detection> d) {
    if (d) out.push_back(*d);
  };
  for (std::size_t j = 0; j < world.enemies.size(); ++j) {
    const sim::EnemyDrone& e = world.enemies[j];
    if (!e.functional) continue;
    for (const sim::GroundRadar& gr : world.radars) keep(detect_ground_radar(gr, j, e, cfg, rng));
    for (const sim::AllyDrone& ally : world.allies) {
      if (!ally.functional) continue;
      keep(detect_drone_radar(ally, j, e, cfg, rng));
      keep(detect_eo(ally, j, e, cfg, rng));
      keep(detect_rf(ally.p, j, e, cfg, rng));
    }
  }
  return out;
}

std::vector<TrackEstimate> fuse(const std::vector<Detection>& detections,
                                const std::vector<TrackEstimate>& previous) {
  struct Accum {
    Vec2 sum;
    int count = 0;
    std::optional<int> payload;
    bool rf = false;
  };
  std::map<std::size_t, Accum> fresh;
  for (const Detection& d : detections) {
    Accum& a = fresh[d.enemy_index];
    a.sum += d.observed_pos;
    ++a.count;
    if (d.payload_seen) a.payload = d.payload_seen;
    a.rf = a.rf || d.sensor_kind == SensorKind::kRadioFrequency;
  }

  std::map<std::size_t, TrackEstimate> merged;
  for (const TrackEstimate& prev : previous) {
    TrackEstimate carried = prev;
    carried.age = prev.age + 1;
    carried.stale = true;
    merged[prev.enemy_index] = carried;
  }
  for (const auto& [index, a] : fresh) {
    TrackEstimate& tr = merged[index];
    tr.enemy_index = index;
    tr.est_pos = a.sum / static_cast<double>(a.count);
    tr.age = 0;
    tr.stale = false;
    if (a.payload) tr.payload = a.payload;
    tr.rf_seen = tr.rf_seen || a.rf;
  }

  std::vector<TrackEstimate> out;
  out.reserve(merged.size());
  for (auto& [index, tr] : merged) out.push_back(tr);
  return out;
}

}  // namespace hitl::sensing
