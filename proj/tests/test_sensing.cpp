#include <doctest.h>

#include "hitl/sensing.hpp"

using namespace hitl;
using namespace hitl::sensing;

TEST_CASE("noise_offset") {
  SensorConfig cfg;
  const Vec2 zero = noise_offset({300, 400}, cfg, 0.0, 0.0);
  CHECK(zero.x == 0.0);
  CHECK(zero.y == 0.0);
  CHECK(noise_offset({0, 0}, cfg, 0.4, 0.4) == Vec2{});

  Rng rng(11);
  Vec2 sum;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vec2 dp = Vec2::polar(rng.uniform(1, 3000), rng.uniform(-kPi, kPi));
    const double ua = rng.uniform(-0.5, 0.5);
    const double uc = rng.uniform(-0.5, 0.5);
    const Vec2 along = noise_offset(dp, cfg, ua, 0.0);
    const Vec2 across = noise_offset(dp, cfg, 0.0, uc);
    REQUIRE(along.norm() <= cfg.d_de / 2 + 1e-12);
    // Exact: the perpendicular is (y, -x).
    REQUIRE(dp.dot(dp.perp()) == 0.0);
    REQUIRE(std::abs(dp.dot(across)) <= 1e-9 * dp.norm() * across.norm() + 1e-12);
    const Vec2 full = noise_offset(dp, cfg, ua, uc);
    REQUIRE(std::abs(full.x - (along + across).x) < 1e-9);
    sum += noise_offset(dp, cfg, rng);
  }
  // Along-axis sd <= 10/sqrt(12); across sd <= 3000 * d_ae / sqrt(12).
  const double sd = std::hypot(cfg.d_de, 3000 * cfg.d_ae) / std::sqrt(12.0);
  CHECK(std::abs(sum.x / n) < 3 * sd / std::sqrt(double(n)));
  CHECK(std::abs(sum.y / n) < 3 * sd / std::sqrt(double(n)));
}

TEST_CASE("angular noise grows linearly with range") {
  SensorConfig cfg;
  for (double r : {10.0, 100.0, 1000.0}) {
    const Vec2 off = noise_offset({r, 0}, cfg, 0.0, 0.5);
    CHECK(off.norm() == doctest::Approx(r * cfg.d_ae * 0.5));
  }
}

TEST_CASE("detect geometry") {
  SensorConfig cfg;
  Rng rng(1);
  CHECK_FALSE(detect({4000, 0}, {0, 0}, 0.0, cfg.r_gr, cfg.rho_gr, 1.0, cfg, rng));
  CHECK_FALSE(detect({0, 100}, {0, 0}, 0.0, cfg.r_gr, kPi / 2, 1.0, cfg, rng));
  CHECK(detect({100, 100}, {0, 0}, 0.0, cfg.r_gr, kPi / 2, 1.0, cfg, rng));  // exactly on the edge
  CHECK_THROWS(detect({1, 0}, {0, 0}, 0.0, 10, 7.0, 1.0, cfg, rng));

  SensorConfig quiet = cfg;
  quiet.d_de = 0;
  quiet.d_ae = 0;
  const auto exact = detect({120, -30}, {0, 0}, 0.0, 500, kPi / 2, 1.0, quiet, rng);
  REQUIRE(exact);
  CHECK(*exact == Vec2{120, -30});
}

TEST_CASE("detect is blank outside coverage whatever the draws") {
  SensorConfig cfg;
  Rng rng(8);
  for (int i = 0; i < 20000; ++i) {
    const Vec2 t = Vec2::polar(rng.uniform(0, 5000), rng.uniform(-kPi, kPi));
    const double heading = rng.uniform(-kPi, kPi);
    const double fov = rng.uniform(0, 2 * kPi);
    const bool visible = in_coverage(t, {}, heading, 3000, fov);
    const auto d = detect(t, {}, heading, 3000, fov, 1.0, cfg, rng);
    REQUIRE(bool(d) == visible);
  }
}

TEST_CASE("detection frequency") {
  SensorConfig cfg;
  Rng rng(99);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += detect({1000, 0}, {0, 0}, 0.0, cfg.r_gr, cfg.rho_gr, cfg.pr_gr, cfg, rng) ? 1 : 0;
  CHECK(std::abs(hits / double(n) - 0.95) <= 0.01);
}

TEST_CASE("EO sensor") {
  SensorConfig cfg;
  cfg.pr_eo = 1.0;
  Rng rng(1);
  sim::AllyDrone drone;
  sim::EnemyDrone enemy;
  enemy.payload = 3;
  enemy.p = {200, 0};
  auto d = detect_eo(drone, 0, enemy, cfg, rng);
  REQUIRE(d);
  CHECK(d->sensor_kind == SensorKind::kElectroOptic);
  CHECK_FALSE(d->payload_seen);
  enemy.p = {100, 0};
  d = detect_eo(drone, 0, enemy, cfg, rng);
  REQUIRE(d);
  CHECK(d->payload_seen == 3);
  drone.phi_eo = kPi / 3;  // gimbal swung away from the body axis
  CHECK_FALSE(detect_eo(drone, 0, enemy, cfg, rng));
  enemy.p = {300, 0};
  drone.phi_eo = 0;
  CHECK_FALSE(detect_eo(drone, 0, enemy, cfg, rng));
}

TEST_CASE("RF sensor") {
  SensorConfig cfg;
  cfg.pr_rf = 1.0;
  Rng rng(1);
  sim::EnemyDrone e;
  e.p = {10, 0};
  e.gcs_controlled = false;
  CHECK_FALSE(detect_rf({0, 0}, 0, e, cfg, rng));
  e.gcs_controlled = true;
  e.p = {-1500, 0};  // behind: no field of view
  CHECK(detect_rf({0, 0}, 0, e, cfg, rng));
  e.p = {2500, 0};
  CHECK_FALSE(detect_rf({0, 0}, 0, e, cfg, rng));
}

TEST_CASE("drone radar respects the toggle") {
  SensorConfig cfg;
  cfg.pr_dr = 1.0;
  Rng rng(1);
  sim::AllyDrone drone;
  sim::EnemyDrone e;
  e.p = {100, 0};
  CHECK(detect_drone_radar(drone, 0, e, cfg, rng));
  drone.radar_enabled = false;
  CHECK_FALSE(detect_drone_radar(drone, 0, e, cfg, rng));
}

TEST_CASE("payload only from close EO detections") {
  SensorConfig cfg;
  Rng rng(4);
  sim::WorldState w;
  for (int i = 0; i < 6; ++i) {
    sim::AllyDrone a;
    a.p = Vec2::polar(50.0 * i, 0.3 * i);
    a.phi = 0.5 * i;
    w.allies.push_back(a);
  }
  for (int j = 0; j < 8; ++j) {
    sim::EnemyDrone e;
    e.p = Vec2::polar(40.0 * j, -0.2 * j);
    e.payload = 1 + j % 3;
    w.enemies.push_back(e);
  }
  w.radars.push_back({});
  for (int k = 0; k < 50; ++k) {
    for (const Detection& d : observe(w, cfg, rng)) {
      if (d.payload_seen) {
        REQUIRE(d.sensor_kind == SensorKind::kElectroOptic);
        bool close = false;
        for (const auto& a : w.allies) close = close || distance(a.p, w.enemies[d.enemy_index].p) <= cfg.r_eo_payload;
        REQUIRE(close);
      }
    }
  }
}

TEST_CASE("fuse") {
  std::vector<Detection> dets{{0, {1, 0}, SensorKind::kGroundRadar, {}}, {0, {3, 0}, SensorKind::kDroneRadar, {}}};
  auto tracks = fuse(dets, {});
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].est_pos == Vec2{2, 0});
  CHECK(tracks[0].age == 0);
  CHECK_FALSE(tracks[0].stale);

  TrackEstimate prev;
  prev.enemy_index = 4;
  prev.est_pos = {5, 5};
  tracks = fuse({}, {prev});
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].est_pos == Vec2{5, 5});
  CHECK(tracks[0].age == 1);
  CHECK(tracks[0].stale);

  CHECK(fuse({}, {}).empty());

  dets = {{2, {0, 0}, SensorKind::kRadioFrequency, {}}, {1, {0, 0}, SensorKind::kElectroOptic, 2}};
  tracks = fuse(dets, {prev});
  REQUIRE(tracks.size() == 3);
  CHECK(tracks[0].enemy_index == 1);
  CHECK(tracks[0].payload == 2);
  CHECK(tracks[1].rf_seen);
  CHECK(tracks[2].enemy_index == 4);
  for (const auto& t : tracks) CHECK(t.stale == (t.age > 0));
  CHECK(fuse(dets, {prev}).size() == tracks.size());
}

TEST_CASE("sensor config validation") {
  SensorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.rho_eo = 7.0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.pr_gr = -0.1;
  CHECK_THROWS(cfg.validate());
}
