// hitl: train, evaluate, run experiments, replay trials, serve live sessions.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hitl/bridge.hpp"
#include "hitl/experiment.hpp"
#include "hitl/harness.hpp"

namespace fs = std::filesystem;
using namespace hitl;
using namespace hitl::harness;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scenario;
  std::optional<double> advice_prob;
  std::optional<int> episodes;
  std::string out = "out";
};

void add_common(CLI::App* app, Common& c, bool training) {
  app->add_option("--config", c.config, "INI config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--scenario", c.scenario, "random | overloaded | decoy")
      ->check(CLI::IsMember({"random", "overloaded", "decoy"}));
  if (training) {
    app->add_option("--advice-prob", c.advice_prob, "probability of sampling the human buffer")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--episodes", c.episodes, "training episodes")->check(CLI::NonNegativeNumber);
  }
  app->add_option("--out", c.out, "output directory");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (c.scenario) {
    // Keep the configured world and sensors; take the kind's layout.
    ScenarioSpec s = ScenarioSpec::make(scenario_kind_from_string(*c.scenario));
    s.world = cfg.scenario.world;
    s.sensors = cfg.scenario.sensors;
    cfg.scenario = s;
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.advice_prob) cfg.trainer.advice_prob = *c.advice_prob;
  if (c.episodes) cfg.episodes = *c.episodes;
  cfg.validate();
  return cfg;
}

ScenarioSpec spec_for(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  return cfg.scenario;
}

void install_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

int run_training(const Common& c, bool full) {
  ExperimentConfig cfg = resolve(c);
  if (!full) {
    cfg.repetitions = 1;
    cfg.evaluate = false;
  }
  install_handlers();
  ExperimentOptions opt;
  opt.stop = &g_stop;
  opt.log = &std::cerr;
  const ExperimentResult r = run_experiment(cfg, c.out, opt);
  if (r.train_eval) {
    const EvalCell& last = r.train_eval->cells.back();
    std::cout << r.train_eval->arm << " " << r.train_eval->scenario << " final success " << last.mean << " +- "
              << last.std << "\n";
  }
  if (r.heldout_eval) {
    const EvalCell& last = r.heldout_eval->cells.back();
    std::cout << r.heldout_eval->arm << " held-out " << r.heldout_eval->scenario << " final success " << last.mean
              << " +- " << last.std << "\n";
  }
  std::cout << (r.complete ? "complete" : "INCOMPLETE (interrupted)") << ", artifacts in " << c.out << "\n";
  return r.complete ? 0 : 130;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-in-the-loop swarm-defense training and evaluation"};
  app.require_subcommand(1);

  Common train_c, exp_c, eval_c, trial_c, serve_c;
  auto* train = app.add_subcommand("train", "one training run: metrics and checkpoints");
  add_common(train, train_c, true);
  auto* exp = app.add_subcommand("experiment", "repeated training runs plus evaluation");
  add_common(exp, exp_c, true);

  auto* eval = app.add_subcommand("eval", "greedy success rate of checkpoints");
  add_common(eval, eval_c, false);
  std::vector<std::string> eval_ckpts;
  int eval_n = 100;
  int eval_workers = 1;
  eval->add_option("--checkpoint", eval_ckpts, "checkpoint files (one repetition each)")->required()->check(CLI::ExistingFile);
  eval->add_option("--n", eval_n, "trials per checkpoint")->check(CLI::PositiveNumber);
  eval->add_option("--workers", eval_workers, "worker threads")->check(CLI::PositiveNumber);

  auto* trial = app.add_subcommand("trial", "run one trial and record it for replay");
  add_common(trial, trial_c, false);
  std::string trial_ckpt, trial_log;
  std::string trial_record = "trial.json";
  bool trial_rescue = false;
  trial->add_option("--checkpoint", trial_ckpt, "policy checkpoint (heuristic advisor when omitted)")->check(CLI::ExistingFile);
  trial->add_option("--record", trial_record, "trial record output");
  trial->add_option("--log", trial_log, "trajectory CSV output");
  trial->add_flag("--rescue", trial_rescue, "scripted operator steers an ally at the real threat");

  auto* replay_cmd = app.add_subcommand("replay", "re-step a recorded trial");
  std::string replay_file, replay_log;
  replay_cmd->add_option("--trial", replay_file, "trial record")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--log", replay_log, "trajectory CSV output");

  auto* serve_cmd = app.add_subcommand("serve", "live operator session over WebSocket");
  add_common(serve_cmd, serve_c, false);
  std::string serve_ckpt;
  std::uint16_t port = 8765;
  std::string host = "127.0.0.1";
  double rate = 20.0;
  std::uint64_t max_ticks = 0;
  serve_cmd->add_option("--checkpoint", serve_ckpt, "policy checkpoint (heuristic advisor when omitted)")->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", port, "listening port");
  serve_cmd->add_option("--host", host, "listening address");
  serve_cmd->add_option("--rate", rate, "ticks per second")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--ticks", max_ticks, "stop after this many frames");

  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");
  Common config_c;
  add_common(config_cmd, config_c, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_training(train_c, false);
    if (*exp) return run_training(exp_c, true);

    if (*config_cmd) {
      std::cout << to_ini(resolve(config_c));
      return 0;
    }

    if (*eval) {
      const ExperimentConfig cfg = resolve(eval_c);
      std::vector<std::vector<std::shared_ptr<const rl::Net>>> actors;
      double scale = 0.0;
      for (const std::string& p : eval_ckpts) {
        rl::Checkpoint ck = rl::load_checkpoint(p);
        if (scale != 0.0 && ck.config.state_scale != scale) throw std::runtime_error("checkpoints disagree on state_scale");
        scale = ck.config.state_scale;
        actors.push_back({std::make_shared<const rl::Net>(std::move(ck.actor))});
      }
      EvalReport rep = evaluate(actors, {0}, cfg.scenario, eval_n, eval_seed(cfg.seed), eval_workers, scale);
      rep.arm = "checkpoint";
      std::cout << rep.scenario << " success " << rep.cells[0].mean << " +- " << rep.cells[0].std << " over "
                << actors.size() << " checkpoint(s) x " << eval_n << " trials\n";
      fs::create_directories(eval_c.out);
      std::ofstream os(fs::path(eval_c.out) / ("eval_" + rep.scenario + ".csv"));
      write_eval_csv(rep, os);
      return 0;
    }

    if (*trial) {
      const ExperimentConfig cfg = resolve(trial_c);
      const ScenarioSpec& spec = cfg.scenario;
      const std::uint64_t seed = trial_c.seed.value_or(1);
      std::shared_ptr<const rl::Net> actor;
      std::shared_ptr<hier::Advisor> advisor;
      double scale = rl::kDefaultStateScale;
      if (!trial_ckpt.empty()) {
        rl::Checkpoint ck = rl::load_checkpoint(trial_ckpt);
        scale = ck.config.state_scale;
        actor = std::make_shared<const rl::Net>(std::move(ck.actor));
      } else {
        advisor = std::make_shared<hier::HeuristicAdvisor>(cfg.heuristic);
      }
      RescueOperator rescue;
      StackController ctl(spec, actor, advisor, trial_rescue ? &rescue : nullptr, scale);
      const sim::WorldState initial = generate_scenario(spec, derive_seed(seed, 0));
      TrialRecord record;
      TrajectoryLog log;
      const TrialResult r = run_trial(initial, ctl, spec.world, derive_seed(seed, 1), &log, &record);
      save_record(record, trial_record);
      if (!trial_log.empty()) {
        std::ofstream os(trial_log);
        log.write_csv(os);
      }
      std::cout << to_string(spec.kind) << " seed " << seed << ": " << sim::to_string(r.termination) << " after "
                << r.steps << " steps, return " << r.discounted_return << ", neutralized " << r.enemies_neutralized
                << ", allies lost " << r.allies_lost << "\n";
      return 0;
    }

    if (*replay_cmd) {
      const TrialRecord record = load_record(replay_file);
      TrajectoryLog log;
      const TrialResult r = replay(record, &log);
      if (!replay_log.empty()) {
        std::ofstream os(replay_log);
        log.write_csv(os);
      }
      const bool same = r.termination == record.result.termination && r.steps == record.result.steps &&
                        r.discounted_return == record.result.discounted_return;
      std::cout << sim::to_string(r.termination) << " after " << r.steps << " steps, return " << r.discounted_return
                << (same ? " (matches record)" : " (DIFFERS from record)") << "\n";
      return same ? 0 : 1;
    }

    if (*serve_cmd) {
      bridge::SessionConfig sc;
      sc.scenario = spec_for(serve_c);
      sc.seed = serve_c.seed.value_or(1);
      sc.tick_rate = rate;
      if (!serve_ckpt.empty()) {
        rl::Checkpoint ck = rl::load_checkpoint(serve_ckpt);
        sc.state_scale = ck.config.state_scale;
        sc.actor = std::make_shared<const rl::Net>(std::move(ck.actor));
      }
      bridge::Session session(sc);
      install_handlers();
      bridge::ServeOptions so;
      so.port = port;
      so.host = host;
      so.max_ticks = max_ticks;
      so.stop = &g_stop;
      so.on_listen = [&host](std::uint16_t p) { std::cerr << "listening on ws://" << host << ":" << p << "\n"; };
      bridge::serve(session, so);
      std::cout << "served " << session.ticks_emitted() << " frames, dropped " << session.dropped() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
