#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hitl/hierarchy.hpp"
#include "hitl/net.hpp"
#include "hitl/rl.hpp"
#include "hitl/sensing.hpp"
#include "hitl/sim.hpp"

namespace hitl::rl {

// Produces the initial world of each training episode.
struct EnvFactory {
  std::function<sim::WorldState(int episode, Rng& rng)> make;
  sim::WorldConfig world;
  sensing::SensorConfig sensors;
  hier::ControlConfig control;
};

struct MetricsRow {
  int episode = 0;
  int steps = 0;
  double ret = 0.0;  // discounted team return
  sim::Termination termination = sim::Termination::kRunning;
  double epsilon = 0.0;
  double human_sample_fraction = 0.0;  // over the episode's minibatches
  double critic_loss = 0.0;            // mean over the episode's updates
  double actor_loss = 0.0;
  int updates = 0;
};

struct Snapshot {
  int episode = 0;  // episodes completed when taken
  Net actor;
  Net critic;
};

struct TrainResult {
  std::vector<Snapshot> checkpoints;  // episode 0, every interval, and the last
  std::vector<MetricsRow> metrics;
  Net actor;
  Net critic;
  std::size_t human_transitions = 0;
  std::size_t ai_transitions = 0;
};

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_episode;
  std::function<void(const Snapshot&)> on_checkpoint;
  // Polled between episodes; returning true ends training early.
  std::function<bool()> stop;
};

// One critic and one actor update per environment tick once the buffers hold
// `warmup` samples. advisor may be null.
TrainResult train(const EnvFactory& env, hier::Advisor* advisor, const TrainerConfig& cfg, int episodes,
                  std::uint64_t seed, const TrainHooks& hooks = {});

}  // namespace hitl::rl
