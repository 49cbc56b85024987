#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <filesystem>

#include "hitl/hierarchy.hpp"
#include "hitl/scenario.hpp"

using namespace hitl;
using namespace hitl::hier;

namespace {

TrackEstimate track(std::size_t idx, Vec2 p) {
  TrackEstimate t;
  t.enemy_index = idx;
  t.est_pos = p;
  return t;
}

sim::AllyDrone ally_at(Vec2 p) {
  sim::AllyDrone a;
  a.p = p;
  return a;
}

sim::AllyAction tagged(double u_sr) {
  sim::AllyAction a;
  a.u_sr = u_sr;
  return a;
}

}  // namespace

TEST_CASE("assign_closest") {
  const std::vector<sim::AllyDrone> three{ally_at({0, 0}), ally_at({50, 50}), ally_at({-9, 4})};
  Assignment a = assign_closest({track(7, {100, 0})}, three);
  for (const auto& x : a) CHECK(x == 7u);

  a = assign_closest({track(0, {1, 0}), track(1, {5, 0})}, {ally_at({0, 0})});
  CHECK(a[0] == 0u);

  a = assign_closest({track(4, {0, 3}), track(2, {3, 0})}, {ally_at({0, 0})});
  CHECK(a[0] == 2u);

  a = assign_closest({}, three);
  for (const auto& x : a) CHECK_FALSE(x);

  std::vector<sim::AllyDrone> with_dead = three;
  with_dead[1].functional = false;
  a = assign_closest({track(1, {0, 0})}, with_dead);
  CHECK_FALSE(a[1]);
}

TEST_CASE("assignment is stable under ally permutation") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TrackEstimate> tracks;
    for (std::size_t j = 0; j < 6; ++j) {
      // Integer grid so exact ties happen.
      tracks.push_back(track(j * 3 % 7, {double(rng.index(5)), double(rng.index(5))}));
    }
    std::vector<sim::AllyDrone> allies;
    for (int i = 0; i < 8; ++i) allies.push_back(ally_at({double(rng.index(5)), double(rng.index(5))}));
    const Assignment base = assign_closest(tracks, allies);
    std::vector<std::size_t> perm(allies.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937(static_cast<unsigned>(trial)));
    std::vector<sim::AllyDrone> shuffled;
    for (std::size_t k : perm) shuffled.push_back(allies[k]);
    std::vector<TrackEstimate> rtracks(tracks.rbegin(), tracks.rend());
    const Assignment moved = assign_closest(rtracks, shuffled);
    for (std::size_t k = 0; k < perm.size(); ++k) REQUIRE(moved[k] == base[perm[k]]);
  }
}

TEST_CASE("drone_state") {
  const rl::StateVec s = drone_state(ally_at({0, 0}), track(0, {30, 40}), 3000.0);
  CHECK(s[0] == doctest::Approx(0.01));
  CHECK(s[1] == doctest::Approx(40.0 / 3000.0));
  const rl::StateVec z = drone_state(ally_at({9, 9}), track(0, {9, 9}), 30.0);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
  CHECK(s.size() == 2);
}

TEST_CASE("arbitrate") {
  const ControlProposal policy{Priority::kPolicy, tagged(0.3)};
  const ControlProposal human{Priority::kHuman, tagged(0.1)};
  const ControlProposal sup{Priority::kSupervisor, tagged(0.0)};
  const ControlProposal adv{Priority::kAdvisor, tagged(0.2)};
  CHECK(arbitrate(std::vector{policy}).u_sr == 0.3);
  CHECK(arbitrate(std::vector{human, policy}).u_sr == 0.1);
  CHECK(arbitrate(std::vector{sup, human, policy}).u_sr == 0.0);
  std::vector all{policy, adv, human, sup};
  std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.action.u_sr < b.action.u_sr; });
  do {
    REQUIRE(arbitrate(all).u_sr == 0.0);
  } while (std::next_permutation(all.begin(), all.end(),
                                 [](auto& a, auto& b) { return a.action.u_sr < b.action.u_sr; }));
  CHECK_THROWS(arbitrate(std::vector<ControlProposal>{}));
  CHECK_THROWS(arbitrate(std::vector{policy, policy}));
}

TEST_CASE("heuristic advisor") {
  const HeuristicParams p;
  AdvisorOutput o = heuristic_advisor(ally_at({0, 0}), track(0, {3, 4}), p);
  CHECK(o.action->u_ma == doctest::Approx(0.9273).epsilon(1e-4));
  CHECK(o.action->u_sr == 0.0);  // 5 m is inside r_N / 2
  o = heuristic_advisor(ally_at({0, 0}), track(0, {30, 40}), p);
  CHECK(o.action->u_ma == doctest::Approx(std::atan2(4.0, 3.0)));
  CHECK(o.action->u_sr == 1.0);
  o = heuristic_advisor(ally_at({0, 0}), track(0, {0, 0}), p);
  CHECK(o.action->u_sr == 0.0);
  o = heuristic_advisor(ally_at({0, 0}), track(0, {-100, 0}), p);
  CHECK(o.action->u_ma == doctest::Approx(kPi));
  CHECK(o.reward_bonus == 0.0);

  HeuristicParams shaped;
  shaped.shaping = 0.5;
  o = heuristic_advisor(ally_at({0, 0}), track(0, {30, 40}), shaped, 60.0);
  CHECK(o.reward_bonus == doctest::Approx(5.0));

  HeuristicAdvisor stateful(shaped);
  CHECK(stateful.advise(0, ally_at({0, 0}), track(0, {100, 0})).reward_bonus == 0.0);
  CHECK(stateful.advise(0, ally_at({10, 0}), track(0, {100, 0})).reward_bonus == doctest::Approx(5.0));
  CHECK(stateful.advise(0, ally_at({10, 0}), track(1, {100, 0})).reward_bonus == 0.0);  // new target
}

TEST_CASE("heuristic closes on a stationary target") {
  sim::WorldConfig cfg;
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    sim::AllyDrone a = ally_at({rng.uniform(0, 6000), rng.uniform(0, 6000)});
    const Vec2 target{rng.uniform(0, 6000), rng.uniform(0, 6000)};
    if (distance(a.p, target) <= cfg.v_max_sr) continue;
    const AdvisorOutput o = heuristic_advisor(a, track(0, target), {});
    sim::AllyAction act;
    act.u_ma = o.action->u_ma;
    act.u_sr = o.action->u_sr;
    const sim::AllyDrone n = sim::step_ally(a, act, cfg, rng);
    REQUIRE(distance(n.p, target) < distance(a.p, target));
  }
}

TEST_CASE("policy advisor") {
  rl::TrainerConfig cfg;
  cfg.beta = 0.0;
  cfg.alpha_g = 0.02;
  cfg.actor_hidden = {16, 16};
  Rng rng(1);
  rl::Net actor = rl::Net::glorot(cfg.actor_sizes(), rl::Head::kActor, rng);
  const rl::Net critic({4, 1}, rl::Head::kLinear);
  std::vector<rl::Transition> data;
  std::vector<std::pair<sim::AllyDrone, TrackEstimate>> probes;
  for (int i = 0; i < 64; ++i) {
    const Vec2 d = Vec2::polar(rng.uniform(30, 300), rng.uniform(-1, 1));
    const sim::AllyDrone a = ally_at({1000, 1000});
    const TrackEstimate t = track(0, a.p + d);
    rl::Transition tr;
    tr.x = drone_state(a, t, cfg.state_scale);
    tr.u = *heuristic_advisor(a, t, {}).action;
    tr.source = rl::Source::kHuman;
    data.push_back(tr);
    probes.emplace_back(a, t);
  }
  const rl::Batch batch = rl::Batch::from(data);
  for (int k = 0; k < 8000; ++k) rl::actor_step(actor, critic, batch, cfg);

  const std::filesystem::path path = std::filesystem::temp_directory_path() / "hitl_test_policy_advisor.bin";
  rl::save_checkpoint(actor, critic, cfg, path);
  PolicyAdvisor adv = PolicyAdvisor::load(path);
  double worst = 0.0;
  for (const auto& [a, t] : probes) {
    const AdvisorOutput got = adv.advise(0, a, t);
    const AdvisorOutput want = heuristic_advisor(a, t, {});
    worst = std::max({worst, std::abs(got.action->u_ma - want.action->u_ma),
                      std::abs(got.action->u_sr - want.action->u_sr)});
    CHECK(got.reward_bonus == 0.0);
    CHECK(adv.advise(0, a, t).action == got.action);
  }
  // Plain descent approaches the saturated speed target slowly; 0.1 is
  // what 8000 full-batch steps reach.
  CHECK(worst < 0.1);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(PolicyAdvisor::load("/nonexistent/ckpt.bin"), rl::CheckpointError);
}

TEST_CASE("compose_action rules") {
  ControlConfig cfg;
  const sim::AllyDrone a = ally_at({0, 0});
  sim::AllyAction out = compose_action({0.5, 1.0}, a, nullptr, cfg);
  CHECK(out.u_heading == 1.0);
  CHECK_FALSE(out.u_emp);

  TrackEstimate near = track(0, {6, 0});
  out = compose_action({0.0, 0.0}, a, &near, cfg);
  CHECK(out.u_emp);
  TrackEstimate far = track(0, {60, 0});
  out = compose_action({0.0, 1.0}, a, &far, cfg);
  CHECK_FALSE(out.u_emp);

  cfg.effector = Effector::kJamIfRf;
  near.rf_seen = true;
  out = compose_action({0.0, 0.0}, a, &near, cfg);
  CHECK(out.u_ej);
  CHECK_FALSE(out.u_emp);
  near.rf_seen = false;
  CHECK(compose_action({0.0, 0.0}, a, &near, cfg).u_emp);
  cfg.effector = Effector::kGpsSpoof;
  CHECK(compose_action({0.0, 0.0}, a, &near, cfg).u_gpss);

  out = compose_action({9.0, 4.0}, a, &far, cfg);
  CHECK(out.u_ma == kPi);
  CHECK(out.u_sr == 1.0);
  CHECK_NOTHROW(out.validate());
}

TEST_CASE("control_step") {
  harness::ScenarioSpec spec = harness::ScenarioSpec::make(harness::ScenarioKind::kRandom);
  spec.n_ad = 3;
  spec.n_ed = 2;
  const sim::WorldState w = harness::generate_scenario(spec, 4);
  std::vector<TrackEstimate> tracks{track(0, w.enemies[0].p), track(1, w.enemies[1].p)};
  Rng rng(3);
  rl::TrainerConfig tcfg;
  const rl::Net actor = rl::Net::glorot(tcfg.actor_sizes(), rl::Head::kActor, rng);
  ControlConfig cfg = spec.control();

  ControlInputs in;
  in.actor = &actor;
  in.collect = true;
  ControlOutput out = control_step(w, tracks, in, cfg, rng);
  REQUIRE(out.actions.size() == 3);
  CHECK(out.radar_actions.size() == w.radars.size());
  CHECK(out.pending.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const TrackEstimate& t = tracks[*out.assignment[i]];
    const rl::DriveAction g = rl::greedy_action(actor, drone_state(w.allies[i], t, cfg.state_scale));
    CHECK(out.actions[i].u_ma == g.u_ma);
    CHECK(out.pending[i].source == rl::Source::kAi);
  }

  const std::map<std::size_t, rl::DriveAction> takeover{{2, {1.25, 0.5}}};
  in.takeovers = &takeover;
  const ControlOutput taken = control_step(w, tracks, in, cfg, rng);
  CHECK(taken.actions[2].u_ma == 1.25);
  CHECK(taken.actions[2].u_sr == 0.5);
  CHECK(taken.pending[2].source == rl::Source::kHuman);
  CHECK(taken.actions[0].u_ma == out.actions[0].u_ma);

  HeuristicAdvisor adv({});
  ControlInputs only;
  only.advisor = &adv;
  const ControlOutput led = control_step(w, tracks, only, cfg, rng);
  const AdvisorOutput want = heuristic_advisor(w.allies[0], tracks[*led.assignment[0]], {});
  CHECK(led.actions[0].u_ma == want.action->u_ma);

  ControlInputs none;
  CHECK_THROWS(control_step(w, tracks, none, cfg, rng));

  // Geofence: an ally at the edge heading out is stopped.
  sim::WorldState edge = w;
  edge.allies[0].p = {5999, 3000};
  ControlConfig fenced = cfg;
  fenced.geofence = true;
  const std::map<std::size_t, rl::DriveAction> out_east{{0, {0.0, 1.0}}};
  ControlInputs pushy;
  pushy.actor = &actor;
  pushy.takeovers = &out_east;
  CHECK(control_step(edge, tracks, pushy, fenced, rng).actions[0].u_sr == 0.0);
  CHECK(control_step(edge, tracks, pushy, cfg, rng).actions[0].u_sr == 1.0);
}

TEST_CASE("state dimension does not grow with the fleet") {
  const harness::ScenarioSpec spec = harness::ScenarioSpec::make(harness::ScenarioKind::kOverloaded);
  const sim::WorldState w = harness::generate_scenario(spec, 9);
  CHECK(w.allies.size() == 50);
  CHECK(w.enemies.size() == 100);
  std::vector<TrackEstimate> tracks;
  for (std::size_t j = 0; j < w.enemies.size(); ++j) tracks.push_back(track(j, w.enemies[j].p));
  Rng rng(1);
  const rl::Net actor = rl::Net::glorot(rl::TrainerConfig{}.actor_sizes(), rl::Head::kActor, rng);
  ControlInputs in;
  in.actor = &actor;
  in.collect = true;
  const ControlOutput out = control_step(w, tracks, in, spec.control(), rng);
  CHECK(out.state_dim == 2);
  CHECK(out.pending.size() == 50);
  for (const PendingTransition& p : out.pending) CHECK(p.x.size() == 2);
}

TEST_CASE("complete_transitions") {
  sim::WorldState w;
  w.allies = {ally_at({0, 0}), ally_at({100, 0})};
  sim::EnemyDrone e;
  e.p = {5, 0};
  e.payload = 2;
  w.enemies = {e};
  std::vector<PendingTransition> pending{{0, 0, {0.1, 0.0}, {0.0, 0.0}, rl::Source::kAi, 0.25, {5, 0}},
                                         {1, 0, {-3.0, 0.0}, {kPi, 1.0}, rl::Source::kHuman, 0.0, {5, 0}}};
  sim::AllyAction fire;
  fire.u_emp = true;
  sim::AllyAction move;
  move.u_ma = kPi;
  move.u_sr = 1.0;
  std::vector<sim::AllyAction> acts{fire, move};
  sim::WorldConfig cfg;
  cfg.pr_empd = 0.0;
  Rng rng(1);
  const sim::StepOutcome o = sim::step_world(w, acts, {}, cfg, rng);
  const auto trs = complete_transitions(pending, o, {}, 30.0, 0.5);
  REQUIRE(trs.size() == 2);
  CHECK(trs[0].r == doctest::Approx(o.r_track / 2 + 2.0));
  CHECK(trs[1].r == doctest::Approx(o.r_track / 2));
  CHECK(trs[0].r_h == 0.75);
  CHECK(trs[0].done);
  CHECK(trs[1].source == rl::Source::kHuman);
  CHECK(trs[1].x_next[0] == doctest::Approx((5.0 - 90.0) / 30.0));
}

TEST_CASE("track keeper drops dead and old tracks") {
  sim::WorldState w;
  w.allies = {ally_at({0, 0})};
  sim::EnemyDrone e;
  e.p = {100, 0};
  w.enemies = {e, e};
  std::vector<TrackEstimate> prev{track(0, {100, 0}), track(1, {100, 0})};
  prev[1].age = 5;
  w.enemies[0].functional = false;
  const auto out = refresh_tracks(w, {}, prev, 5);
  CHECK(out.empty());
  const auto kept = refresh_tracks(w, {}, {track(1, {1, 1})}, 5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].age == 1);
}
