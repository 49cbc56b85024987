#include "hitl/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace hitl::rl {

namespace {

enum Stream : std::uint64_t { kInit = 1, kBatch = 2, kEpisode = 3 };

}  // namespace

TrainResult train(const EnvFactory& env, hier::Advisor* advisor, const TrainerConfig& cfg, int episodes,
                  std::uint64_t seed, const TrainHooks& hooks) {
  cfg.validate();
  env.world.validate();
  env.sensors.validate();
  if (!env.make) throw std::invalid_argument("train: env factory has no generator");
  if (episodes < 0) throw std::invalid_argument("train: negative episode count");

  Rng init_rng(derive_seed(seed, kInit));
  Rng batch_rng(derive_seed(seed, kBatch));
  TrainResult result{{}, {}, Net::glorot(cfg.actor_sizes(), Head::kActor, init_rng),
                     Net::glorot(cfg.critic_sizes(), Head::kLinear, init_rng)};
  Net& actor = result.actor;
  Net& critic = result.critic;
  Net actor_target = actor;
  Net critic_target = critic;

  hier::ControlConfig control = env.control;
  control.state_scale = cfg.state_scale;
  ReplayBuffers buffers(cfg.buffer_capacity);

  auto snapshot = [&](int episode) {
    result.checkpoints.push_back(Snapshot{episode, actor, critic});
    if (hooks.on_checkpoint) hooks.on_checkpoint(result.checkpoints.back());
  };
  snapshot(0);

  for (int ep = 0; ep < episodes; ++ep) {
    if (hooks.stop && hooks.stop()) break;
    const std::uint64_t ep_seed = derive_seed(seed, kEpisode + 16 * static_cast<std::uint64_t>(ep));
    Rng scenario_rng(derive_seed(ep_seed, 0));
    Rng world_rng(derive_seed(ep_seed, 1));
    Rng sense_rng(derive_seed(ep_seed, 2));
    Rng control_rng(derive_seed(ep_seed, 3));

    sim::WorldState world = env.make(ep, scenario_rng);
    hier::TrackKeeper keeper(env.sensors, control.max_track_age);
    keeper.update(world, sense_rng);
    if (advisor) advisor->reset();

    TrainerConfig step_cfg = cfg;
    const double shrink = std::pow(cfg.alpha_decay, ep);
    step_cfg.alpha_q = cfg.alpha_q * shrink;
    step_cfg.alpha_g = cfg.alpha_g * shrink;

    MetricsRow row;
    row.episode = ep;
    row.epsilon = cfg.epsilon(ep);
    double discount = 1.0;
    std::size_t sampled = 0, sampled_human = 0;
    sim::Termination term = sim::Termination::kRunning;

    while (term == sim::Termination::kRunning) {
      hier::ControlInputs in;
      in.actor = &actor;
      in.advisor = advisor;
      in.trainer = &cfg;
      in.explore_k = ep;
      in.collect = true;
      hier::ControlOutput out = hier::control_step(world, keeper.tracks(), in, control, control_rng);
      sim::StepOutcome outcome = sim::step_world(world, out.actions, out.radar_actions, env.world, world_rng);
      keeper.update(outcome.next, sense_rng);

      for (const Transition& tr : hier::complete_transitions(out.pending, outcome, keeper.tracks(), cfg.state_scale)) {
        push(buffers, tr);
        ++(tr.source == Source::kHuman ? result.human_transitions : result.ai_transitions);
      }

      if (buffers.human.size() + buffers.ai.size() >= cfg.warmup) {
        const Batch batch = sample_batch(buffers, cfg, batch_rng);
        const Eigen::VectorXd targets = cfg.target_networks ? q_target(batch, critic_target, actor_target, cfg)
                                                            : q_target(batch, critic, actor, cfg);
        row.critic_loss += critic_step(critic, batch, targets, step_cfg);
        row.actor_loss += actor_step(actor, critic, batch, step_cfg);
        if (cfg.target_networks) {
          critic_target.blend_toward(critic, cfg.polyak_tau);
          actor_target.blend_toward(actor, cfg.polyak_tau);
        }
        ++row.updates;
        sampled += static_cast<std::size_t>(batch.size());
        sampled_human += batch.human_count;
      }

      row.ret += discount * (outcome.r_track + outcome.r_neut);
      discount *= env.world.gamma;
      ++row.steps;
      term = outcome.termination;
      world = std::move(outcome.next);
    }

    row.termination = term;
    if (row.updates > 0) {
      row.critic_loss /= row.updates;
      row.actor_loss /= row.updates;
    }
    row.human_sample_fraction = sampled > 0 ? static_cast<double>(sampled_human) / static_cast<double>(sampled) : 0.0;
    result.metrics.push_back(row);
    if (hooks.on_episode) hooks.on_episode(row);

    const int done_eps = ep + 1;
    if (done_eps % cfg.checkpoint_interval == 0 || done_eps == episodes) snapshot(done_eps);
  }
  return result;
}

}  // namespace hitl::rl
