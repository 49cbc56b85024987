#include <doctest.h>

#include <deque>
#include <filesystem>
#include <fstream>

#include "hitl/rl.hpp"
#include "hitl/scenario.hpp"
#include "hitl/trainer.hpp"

using namespace hitl;
using namespace hitl::rl;
namespace fs = std::filesystem;

namespace {

Transition tr_of(double tag, Source s) {
  Transition t;
  t.x = {tag, -tag};
  t.x_next = {tag + 1, tag};
  t.u = {0.1, 0.5};
  t.r = tag;
  t.source = s;
  return t;
}

Batch random_batch(int n, Rng& rng, Source s = Source::kHuman) {
  std::vector<Transition> v;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    t.x_next = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    t.u = {rng.uniform(-2.5, 2.5), rng.uniform01()};
    t.r = rng.uniform(-1, 1);
    t.r_h = rng.uniform(-0.2, 0.2);
    t.done = rng.bernoulli(0.2);
    t.source = s;
    v.push_back(t);
  }
  return Batch::from(v);
}

Net stub_critic(double value) {
  Net c({kStateDim + kActionDim, 1}, Head::kLinear);
  c.layers()[0].b(0) = value;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hitl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrainerConfig small_cfg() {
  TrainerConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  cfg.n_b = 16;
  cfg.warmup = 16;
  return cfg;
}

EnvFactory small_env() {
  harness::ScenarioSpec spec = harness::ScenarioSpec::make(harness::ScenarioKind::kRandom);
  spec.world.timelimit = 200;
  return EnvFactory{[spec](int, Rng& rng) { return harness::generate_scenario(spec, rng); }, spec.world,
                    spec.sensors, spec.control()};
}

}  // namespace

TEST_CASE("epsilon schedule") {
  TrainerConfig cfg;
  CHECK(cfg.epsilon(0) == 1.0);
  double prev = 2.0;
  for (int k = 0; k < 2000; k += 7) {
    const double e = cfg.epsilon(k);
    CHECK(e <= prev);
    CHECK(e >= cfg.eps_min);
    prev = e;
  }
  CHECK(cfg.epsilon(5000) == cfg.eps_min);
}

TEST_CASE("select_action cases") {
  Rng rng(1);
  const Net actor = Net::glorot(TrainerConfig{}.actor_sizes(), Head::kActor, rng);
  const StateVec x{0.3, -0.2};
  TrainerConfig cfg;

  cfg.eps0 = 0.0;
  cfg.eps_min = 0.0;
  const ActionChoice greedy = select_action(actor, x, 0, cfg, DriveAction{1.0, 1.0}, rng);
  CHECK(greedy.source == Source::kAi);
  CHECK(greedy.action == greedy_action(actor, x));

  cfg.eps0 = 1.0;
  cfg.eps_min = 1.0;
  cfg.phi_h = 1.0;
  const ActionChoice human = select_action(actor, x, 0, cfg, DriveAction{1.0, 0.25}, rng);
  CHECK(human.source == Source::kHuman);
  CHECK(human.action == DriveAction{1.0, 0.25});

  // No human on hand: exploration noise instead.
  const ActionChoice alone = select_action(actor, x, 0, cfg, std::nullopt, rng);
  CHECK(alone.source == Source::kAi);

  cfg.phi_h = 0.0;
  cfg.noise_std = 5.0;
  bool moved = false;
  for (int i = 0; i < 200; ++i) {
    const ActionChoice c = select_action(actor, x, 0, cfg, DriveAction{1.0, 0.25}, rng);
    CHECK(c.source == Source::kAi);
    CHECK(std::abs(c.action.u_ma) <= kPi);
    CHECK(c.action.u_sr >= 0.0);
    CHECK(c.action.u_sr <= 1.0);
    moved = moved || !(c.action == greedy.action);
  }
  CHECK(moved);

  CHECK_THROWS_AS(select_action(actor, x, 0, cfg, DriveAction{4.0, 0.5}, rng), std::invalid_argument);
  CHECK_THROWS_AS(select_action(actor, x, 0, cfg, DriveAction{0.0, 1.5}, rng), std::invalid_argument);
}

TEST_CASE("select_action stays in bounds for any parameters") {
  Rng rng(2);
  TrainerConfig cfg;
  cfg.noise_std = 3.0;
  for (int trial = 0; trial < 50; ++trial) {
    Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
    const double blow = rng.uniform(0.1, 100.0);
    for (auto& l : actor.layers()) {
      l.w *= blow;
      l.b.setConstant(rng.uniform(-50, 50));
    }
    for (int i = 0; i < 20; ++i) {
      const StateVec x{rng.uniform(-100, 100), rng.uniform(-100, 100)};
      const ActionChoice c = select_action(actor, x, static_cast<int>(rng.index(500)), cfg, std::nullopt, rng);
      REQUIRE(std::abs(c.action.u_ma) <= kPi);
      REQUIRE(c.action.u_sr >= 0.0);
      REQUIRE(c.action.u_sr <= 1.0);
    }
  }
}

TEST_CASE("push routes by source and evicts FIFO") {
  ReplayBuffers b(3);
  push(b, tr_of(1, Source::kHuman));
  CHECK(b.human.size() == 1);
  CHECK(b.ai.size() == 0);
  push(b, tr_of(2, Source::kAi));
  CHECK(b.ai.size() == 1);
  CHECK(b.human.size() == 1);
  for (int i = 3; i <= 6; ++i) push(b, tr_of(i, Source::kAi));
  CHECK(b.ai.size() == 3);
  CHECK(b.ai.at(0).r == 4);
  CHECK(b.ai.at(2).r == 6);
  CHECK_THROWS_AS(b.ai.at(3), std::out_of_range);
  CHECK_THROWS(RingBuffer(0));
}

TEST_CASE("ring buffer matches a reference deque") {
  Rng rng(3);
  RingBuffer ring(17);
  std::deque<double> ref;
  for (int i = 0; i < 500; ++i) {
    ring.push(tr_of(i, Source::kAi));
    ref.push_back(i);
    if (ref.size() > 17) ref.pop_front();
    REQUIRE(ring.size() == ref.size());
    const std::size_t k = rng.index(ref.size());
    REQUIRE(ring.at(k).r == ref[k]);
  }
}

TEST_CASE("sample_batch sourcing") {
  ReplayBuffers b(100);
  Rng rng(4);
  TrainerConfig cfg;
  CHECK_THROWS_AS(sample_batch(b, cfg, rng), std::logic_error);
  for (int i = 0; i < 10; ++i) {
    push(b, tr_of(i, Source::kHuman));
    push(b, tr_of(100 + i, Source::kAi));
  }
  cfg.advice_prob = 0.0;
  CHECK(sample_batch(b, cfg, rng).human_count == 0);
  cfg.advice_prob = 1.0;
  CHECK(sample_batch(b, cfg, rng).human_count == static_cast<std::size_t>(cfg.n_b));

  ReplayBuffers ai_only(10);
  push(ai_only, tr_of(1, Source::kAi));
  CHECK(sample_batch(ai_only, cfg, rng).human_count == 0);

  for (double p : {0.1, 0.2}) {
    cfg.advice_prob = p;
    cfg.n_b = 1000;
    std::size_t humans = 0;
    for (int k = 0; k < 100; ++k) {
      const Batch batch = sample_batch(b, cfg, rng);
      humans += batch.human_count;
      CHECK(batch.human.sum() == doctest::Approx(double(batch.human_count)));
    }
    CHECK(std::abs(humans / 1e5 - p) <= 0.01);
  }
}

TEST_CASE("q_target") {
  Rng rng(5);
  TrainerConfig cfg;
  const Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
  std::vector<Transition> v{tr_of(1, Source::kAi)};
  v[0].r = 1.0;
  v[0].r_h = 0.5;
  v[0].done = false;

  cfg.gamma = 0.9;
  CHECK(q_target(Batch::from(v), stub_critic(2.0), actor, cfg)(0) == doctest::Approx(3.3));

  v[0].done = true;
  CHECK(q_target(Batch::from(v), stub_critic(2.0), actor, cfg)(0) == 1.5);
  v[0].done = false;
  cfg.gamma = 1e-300;
  CHECK(q_target(Batch::from(v), stub_critic(2.0), actor, cfg)(0) == doctest::Approx(1.5));
  CHECK_THROWS(q_target(Batch::from({}), stub_critic(2.0), actor, cfg));
}

TEST_CASE("terminal targets ignore the networks") {
  Rng rng(6);
  TrainerConfig cfg;
  Batch batch = random_batch(32, rng);
  batch.done.setOnes();
  const Eigen::VectorXd expected = batch.r + batch.r_h;
  for (int i = 0; i < 10; ++i) {
    const Net a = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
    const Net c = Net::glorot(cfg.critic_sizes(), Head::kLinear, rng);
    REQUIRE(q_target(batch, c, a, cfg) == expected);
  }
}

TEST_CASE("critic loss") {
  Rng rng(7);
  TrainerConfig cfg;
  const Batch batch = random_batch(16, rng);
  Net critic = stub_critic(0.7);
  const Eigen::VectorXd exact = Eigen::VectorXd::Constant(16, 0.7);
  CHECK(critic_loss(critic, batch, exact, cfg) == 0.0);
  const Net before = critic;
  CHECK(critic_step(critic, batch, exact, cfg) == 0.0);
  CHECK(critic.layers()[0].b == before.layers()[0].b);

  cfg.lambda_q = 0.3;
  CHECK(critic_loss(critic, batch, exact, cfg) == doctest::Approx(0.3 / 16 * 16 * 0.49));

  Eigen::VectorXd bad = exact;
  bad(3) = std::nan("");
  CHECK_THROWS_AS(critic_step(critic, batch, bad, cfg), DivergenceError);
  CHECK(critic.layers()[0].b == before.layers()[0].b);
}

TEST_CASE("critic loss descends on a fixed batch") {
  Rng rng(8);
  TrainerConfig cfg;
  Net critic = Net::glorot(cfg.critic_sizes(), Head::kLinear, rng);
  const Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
  const Batch batch = random_batch(64, rng);
  const Eigen::VectorXd targets = q_target(batch, critic, actor, cfg);
  int decreases = 0;
  double prev = critic_loss(critic, batch, targets, cfg);
  for (int i = 0; i < 50; ++i) {
    critic_step(critic, batch, targets, cfg);
    const double now = critic_loss(critic, batch, targets, cfg);
    decreases += now < prev ? 1 : 0;
    prev = now;
  }
  CHECK(decreases >= 45);
}

TEST_CASE("actor loss") {
  Rng rng(9);
  TrainerConfig cfg;
  const Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
  Batch batch = random_batch(20, rng);

  SUBCASE("cloning fixed point") {
    cfg.beta = 0.0;
    batch.u = actor.forward(batch.x);
    CHECK(actor_loss(actor, stub_critic(5.0), batch, cfg) == 0.0);
  }
  SUBCASE("pure self learning") {
    cfg.beta = 1.0;
    CHECK(actor_loss(actor, stub_critic(2.5), batch, cfg) == doctest::Approx(-2.5));
  }
  SUBCASE("half and half against a zero critic") {
    cfg.beta = 0.5;
    cfg.lambda_g = 0.1;
    const Eigen::MatrixXd a = actor.forward(batch.x);
    Eigen::MatrixXd err = a - batch.u;
    for (Eigen::Index j = 0; j < err.cols(); ++j) err(0, j) = wrap_angle(err(0, j));
    const double mse = err.squaredNorm() / 20.0;
    const double reg = 0.1 * a.squaredNorm() / 20.0;
    CHECK(actor_loss(actor, stub_critic(0.0), batch, cfg) == doctest::Approx(0.5 * mse + reg));
  }
}

TEST_CASE("beta = 0 and lambda_g = 0 is behavior cloning") {
  Rng rng(10);
  TrainerConfig cfg;
  cfg.beta = 0.0;
  cfg.lambda_g = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
    const Net critic = Net::glorot(cfg.critic_sizes(), Head::kLinear, rng);
    const Batch batch = random_batch(32, rng);
    Eigen::MatrixXd err = actor.forward(batch.x) - batch.u;
    for (Eigen::Index j = 0; j < err.cols(); ++j) err(0, j) = wrap_angle(err(0, j));
    REQUIRE(actor_loss(actor, critic, batch, cfg) == doctest::Approx(err.squaredNorm() / 32.0).epsilon(1e-14));
  }
}

TEST_CASE("cloning term covers expert samples only by default") {
  Rng rng(11);
  TrainerConfig cfg;
  cfg.beta = 0.0;
  const Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
  const Batch ai = random_batch(16, rng, Source::kAi);
  CHECK(actor_loss(actor, stub_critic(1.0), ai, cfg) == 0.0);
  cfg.bc_human_only = false;
  CHECK(actor_loss(actor, stub_critic(1.0), ai, cfg) > 0.0);
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(12);
  TrainerConfig cfg;
  cfg.beta = 0.3;
  cfg.lambda_q = 0.05;
  cfg.lambda_g = 0.05;
  cfg.bc_human_only = false;
  Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
  Net critic = Net::glorot(cfg.critic_sizes(), Head::kLinear, rng);
  Batch batch = random_batch(8, rng);
  // Keep angle residuals away from the +-pi cut.
  batch.u.row(0) = actor.forward(batch.x).row(0).array() + 0.3;
  const Eigen::VectorXd targets = q_target(batch, critic, actor, cfg);

  auto check_net = [](Net& net, const Gradient& g, const std::function<double()>& loss) {
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto one = [&](double& p, double analytic) {
        const double keep = p;
        p = keep + h;
        const double up = loss();
        p = keep - h;
        const double down = loss();
        p = keep;
        const double numeric = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-3}));
      };
      Layer& L = net.layers()[l];
      for (Eigen::Index i = 0; i < L.w.size(); ++i) one(L.w.data()[i], g[l].w.data()[i]);
      for (Eigen::Index i = 0; i < L.b.size(); ++i) one(L.b(i), g[l].b(i));
    }
    return worst;
  };

  const GradResult gc = critic_loss_gradient(critic, batch, targets, cfg);
  CHECK(gc.loss == doctest::Approx(critic_loss(critic, batch, targets, cfg)));
  CHECK(check_net(critic, gc.grads, [&] { return critic_loss(critic, batch, targets, cfg); }) < 1e-4);

  const GradResult ga = actor_loss_gradient(actor, critic, batch, cfg);
  CHECK(ga.loss == doctest::Approx(actor_loss(actor, critic, batch, cfg)));
  CHECK(check_net(actor, ga.grads, [&] { return actor_loss(actor, critic, batch, cfg); }) < 1e-4);
}

TEST_CASE("actor step freezes the critic and lowers the cloning loss") {
  Rng rng(13);
  TrainerConfig cfg;
  cfg.beta = 0.0;
  Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
  const Net critic = Net::glorot(cfg.critic_sizes(), Head::kLinear, rng);
  Batch batch = random_batch(32, rng);
  batch.u.row(0).setConstant(0.5);
  const Net critic_copy = critic;
  const double before = actor_loss(actor, critic, batch, cfg);
  for (int i = 0; i < 20; ++i) actor_step(actor, critic, batch, cfg);
  CHECK(actor_loss(actor, critic, batch, cfg) < before);
  CHECK(critic.layers()[0].w == critic_copy.layers()[0].w);
}

TEST_CASE("checkpoint round trip and errors") {
  const fs::path dir = temp_dir("ckpt");
  Rng rng(14);
  TrainerConfig cfg;
  cfg.advice_prob = 0.1;
  cfg.actor_hidden = {16, 8};
  const Net actor = Net::glorot(cfg.actor_sizes(), Head::kActor, rng);
  const Net critic = Net::glorot(cfg.critic_sizes(), Head::kLinear, rng);
  const fs::path p = dir / "a.bin";
  save_checkpoint(actor, critic, cfg, p);
  const Checkpoint ck = load_checkpoint(p);
  CHECK(ck.config.advice_prob == 0.1);
  CHECK(ck.config.actor_hidden == cfg.actor_hidden);
  for (int i = 0; i < 100; ++i) {
    Eigen::MatrixXd x(2, 1);
    x << rng.uniform(-2, 2), rng.uniform(-2, 2);
    REQUIRE(ck.actor.forward(x) == actor.forward(x));
  }
  for (std::size_t l = 0; l < critic.layers().size(); ++l) CHECK(ck.critic.layers()[l].w == critic.layers()[l].w);
  CHECK(to_text(ck.config) == to_text(cfg));

  const std::string bytes = encode_checkpoint(actor, critic, cfg);
  CHECK(bytes.substr(0, kCheckpointMagic.size()) == kCheckpointMagic);

  auto kind_of = [](const std::string& b) {
    try {
      decode_checkpoint(b);
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    FAIL("decoded a bad checkpoint");
    return CheckpointError::Kind::kIo;
  };
  CHECK(kind_of(bytes.substr(0, bytes.size() / 2)) == CheckpointError::Kind::kCorrupt);
  CHECK(kind_of(bytes + "x") == CheckpointError::Kind::kCorrupt);
  CHECK(kind_of("NOTACKPT" + bytes.substr(8)) == CheckpointError::Kind::kCorrupt);
  std::string v2 = bytes;
  v2[kCheckpointMagic.size()] = 2;
  CHECK(kind_of(v2) == CheckpointError::Kind::kVersion);

  TrainerConfig other = cfg;
  other.actor_hidden = {64, 64};
  try {
    load_checkpoint(p, other);
    FAIL("loaded a mismatched shape");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kShape);
  }
  try {
    load_checkpoint(dir / "missing.bin");
    FAIL("loaded a missing file");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kIo);
  }
  fs::remove_all(dir);
}

TEST_CASE("trainer config text") {
  TrainerConfig cfg;
  cfg.beta = 0.125;
  cfg.critic_hidden = {3, 5, 7};
  cfg.bc_human_only = false;
  cfg.target_networks = true;
  const TrainerConfig back = trainer_config_from_text(to_text(cfg));
  CHECK(to_text(back) == to_text(cfg));
  CHECK(back.beta == 0.125);
  CHECK_FALSE(back.bc_human_only);
  CHECK_THROWS_AS(trainer_config_from_text("nope=1\n"), std::invalid_argument);
  CHECK_THROWS_AS(trainer_config_from_text("beta=abc\n"), std::invalid_argument);
  CHECK_THROWS_AS(trainer_config_from_text("actor_hidden=4,,4\n"), std::invalid_argument);
  TrainerConfig c;
  CHECK_FALSE(set_trainer_field(c, "missing", "1"));

  c = {};
  c.beta = 1.5;
  CHECK_THROWS(c.validate());
  c = {};
  c.alpha_decay = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.gamma = 1.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("train with zero episodes") {
  const TrainResult r = train(small_env(), nullptr, small_cfg(), 0, 1);
  CHECK(r.metrics.empty());
  REQUIRE(r.checkpoints.size() == 1);
  CHECK(r.checkpoints[0].episode == 0);
}

TEST_CASE("training is reproducible") {
  harness::ScenarioSpec spec = harness::ScenarioSpec::make(harness::ScenarioKind::kRandom);
  hier::HeuristicAdvisor adv_a(hier::HeuristicParams{}), adv_b(hier::HeuristicParams{});
  TrainerConfig cfg = small_cfg();
  cfg.checkpoint_interval = 2;
  const TrainResult a = train(small_env(), &adv_a, cfg, 4, 99);
  const TrainResult b = train(small_env(), &adv_b, cfg, 4, 99);
  REQUIRE(a.metrics.size() == 4);
  REQUIRE(b.metrics.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.metrics[i].ret == b.metrics[i].ret);
    CHECK(a.metrics[i].critic_loss == b.metrics[i].critic_loss);
    CHECK(a.metrics[i].human_sample_fraction == b.metrics[i].human_sample_fraction);
    CHECK(a.metrics[i].epsilon == cfg.epsilon(static_cast<int>(i)));
  }
  CHECK(encode_checkpoint(a.actor, a.critic, cfg) == encode_checkpoint(b.actor, b.critic, cfg));
  std::vector<int> eps;
  for (const Snapshot& s : a.checkpoints) eps.push_back(s.episode);
  CHECK(eps == std::vector<int>{0, 2, 4});
  CHECK(a.human_transitions > 0);
  CHECK(a.ai_transitions > 0);
  CHECK(a.actor.all_finite());

  // A different seed gives a different run.
  hier::HeuristicAdvisor adv_c(hier::HeuristicParams{});
  const TrainResult c = train(small_env(), &adv_c, cfg, 4, 100);
  CHECK(encode_checkpoint(c.actor, c.critic, cfg) != encode_checkpoint(a.actor, a.critic, cfg));
}

TEST_CASE("no advisor means no human samples") {
  TrainerConfig cfg = small_cfg();
  const TrainResult r = train(small_env(), nullptr, cfg, 2, 5);
  CHECK(r.human_transitions == 0);
  for (const MetricsRow& m : r.metrics) CHECK(m.human_sample_fraction == 0.0);
}
