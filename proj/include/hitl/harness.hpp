#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hitl/hierarchy.hpp"
#include "hitl/net.hpp"
#include "hitl/rl.hpp"
#include "hitl/scenario.hpp"
#include "hitl/sim.hpp"

namespace hitl::harness {

struct Command {
  std::vector<sim::AllyAction> allies;
  std::vector<double> radars;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(const sim::WorldState& initial, std::uint64_t seed) = 0;
  // Called once per tick with the ground-truth world.
  virtual Command decide(const sim::WorldState& world) = 0;
};

// Scripted stand-in for a live operator: may take over drones each tick.
class Operator {
 public:
  virtual ~Operator() = default;
  virtual void reset() {}
  virtual std::map<std::size_t, rl::DriveAction> takeovers(const sim::WorldState& truth) = 0;
};

// Full ally stack: sensing, tracks, assignment, per-drone actor, rules.
// With no actor the advisor drives.
class StackController : public Controller {
 public:
  StackController(const ScenarioSpec& spec, std::shared_ptr<const rl::Net> actor,
                  std::shared_ptr<hier::Advisor> advisor = nullptr, Operator* op = nullptr,
                  double state_scale = rl::kDefaultStateScale);
  void reset(const sim::WorldState& initial, std::uint64_t seed) override;
  Command decide(const sim::WorldState& world) override;

  // Replaces the scripted operator for the next decide() call only.
  void set_takeovers(std::map<std::size_t, rl::DriveAction> t) { manual_ = std::move(t); }
  const hier::ControlOutput& last_output() const { return last_; }
  const std::vector<sensing::TrackEstimate>& tracks() const { return keeper_.tracks(); }

 private:
  hier::ControlConfig control_;
  std::shared_ptr<const rl::Net> actor_;
  std::shared_ptr<hier::Advisor> advisor_;
  Operator* op_;
  hier::TrackKeeper keeper_;
  Rng sense_rng_{0};
  Rng control_rng_{0};
  std::optional<std::map<std::size_t, rl::DriveAction>> manual_;
  hier::ControlOutput last_;
};

// Does nothing; the enemies walk in.
class IdleController : public Controller {
 public:
  void reset(const sim::WorldState&, std::uint64_t) override {}
  Command decide(const sim::WorldState& world) override;
};

// Decoy-scenario operator that knows which enemy is real. It steers the
// functional ally closest to the real threat straight at it until the threat
// is down.
class RescueOperator : public Operator {
 public:
  std::map<std::size_t, rl::DriveAction> takeovers(const sim::WorldState& truth) override;
};

struct TrialResult {
  sim::Termination termination = sim::Termination::kRunning;
  int steps = 0;
  double discounted_return = 0.0;
  int enemies_neutralized = 0;
  int allies_lost = 0;
  std::size_t state_dim = rl::kStateDim;
  bool state_dim_constant = true;  // per-drone state length never changed
  bool success() const { return termination == sim::Termination::kSuccess; }
};

// Per-tick rows: tick,kind,id,x,y,phi,functional
struct TrajectoryLog {
  std::vector<std::string> rows;
  void record(const sim::WorldState& w);
  void write_csv(std::ostream& os) const;
};

// Every action taken, enough to replay the trial without the controller.
struct TrialRecord {
  std::uint64_t seed = 0;
  sim::WorldConfig world;
  sim::WorldState initial;
  std::vector<Command> commands;
  TrialResult result;
};

std::uint64_t world_stream(std::uint64_t trial_seed);

TrialResult run_trial(const sim::WorldState& initial, Controller& controller, const sim::WorldConfig& cfg,
                      std::uint64_t seed, TrajectoryLog* log = nullptr, TrialRecord* record = nullptr);

// Re-executes the recorded commands against the recorded world seed.
TrialResult replay(const TrialRecord& record, TrajectoryLog* log = nullptr);

void save_record(const TrialRecord& record, const std::filesystem::path& path);
TrialRecord load_record(const std::filesystem::path& path);

// Runs trial(seed_i) for n seeds derived from `seed`, on `workers` threads.
// Results are indexed by trial, so the output does not depend on workers.
std::vector<TrialResult> run_trials(const std::function<TrialResult(std::uint64_t)>& trial, int n,
                                    std::uint64_t seed, int workers = 1);

double success_rate(const std::vector<TrialResult>& results);

// Fresh scenario from trial_seed, greedy policy, optional scripted operator.
TrialResult policy_trial(const ScenarioSpec& spec, std::shared_ptr<const rl::Net> actor, std::uint64_t trial_seed,
                         Operator* op = nullptr, double state_scale = rl::kDefaultStateScale);

struct EvalCell {
  int episode = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across repetitions
  std::vector<double> per_rep;
};

struct EvalReport {
  std::string arm;
  std::string scenario;
  std::vector<EvalCell> cells;  // one per checkpoint episode
};

// actors[rep][checkpoint]; all reps share the episode axis. Every checkpoint
// is scored on the same n_eval scenarios.
EvalReport evaluate(const std::vector<std::vector<std::shared_ptr<const rl::Net>>>& actors,
                    const std::vector<int>& episodes, const ScenarioSpec& spec, int n_eval, std::uint64_t seed,
                    int workers = 1, double state_scale = rl::kDefaultStateScale);
// Same aggregation over an arbitrary per-(rep, checkpoint) success-rate source.
EvalReport aggregate(const std::vector<std::vector<double>>& rates, const std::vector<int>& episodes);

void write_eval_csv(const EvalReport& report, std::ostream& os);

}  // namespace hitl::harness
