#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "hitl/net.hpp"
#include "hitl/rl.hpp"
#include "hitl/sensing.hpp"
#include "hitl/sim.hpp"

// Supervision, tactics and drone layers of the control stack.
namespace hitl::hier {

using sensing::TrackEstimate;

// Per ally: the enemy index it pursues, if any.
using Assignment = std::vector<std::optional<std::size_t>>;

enum class Priority : int { kSupervisor = 0, kHuman = 1, kAdvisor = 2, kPolicy = 3 };

struct ControlProposal {
  Priority source_priority = Priority::kPolicy;
  sim::AllyAction action;
};

struct AdvisorOutput {
  std::optional<rl::DriveAction> action;
  double reward_bonus = 0.0;  // r_H
};

// Which effector the auto-neutralization rule asserts.
enum class Effector {
  kEmp,       // u_EMP
  kJamIfRf,   // u_EJ for RF-confirmed (GCS-controlled) targets, u_EMP otherwise
  kGpsSpoof,  // u_GPSS
};

struct ControlConfig {
  double state_scale = rl::kDefaultStateScale;
  double fire_range = 10.0;  // assert the effector when the track is this close
  Effector effector = Effector::kEmp;
  int max_track_age = 50;
  double radar_sweep = 1.0;  // ground radar action each tick
  // Supervisor geofence: veto motion that would leave the arena square.
  bool geofence = false;
  double arena_min = 0.0;
  double arena_max = 6000.0;
  // Motion limits the rules need; copied from the world configuration.
  double v_max_sr = 10.0;
  double v_max_as = 0.2;
  double v_max_eo = kPi;

  static ControlConfig from(const sim::WorldConfig& world);
};

Assignment assign_closest(const std::vector<TrackEstimate>& tracks, const std::vector<sim::AllyDrone>& allies);

rl::StateVec drone_state(const sim::AllyDrone& ally, const TrackEstimate& track, double scale);

// Lowest rank wins. Ranks must be distinct.
sim::AllyAction arbitrate(std::span<const ControlProposal> proposals);

struct HeuristicParams {
  double r_n = 10.0;
  double shaping = 0.0;  // reward bonus per meter of closure
};

AdvisorOutput heuristic_advisor(const sim::AllyDrone& ally, const TrackEstimate& track,
                                const HeuristicParams& params,
                                std::optional<double> previous_distance = std::nullopt);

AdvisorOutput policy_advisor(const rl::Checkpoint& checkpoint, const sim::AllyDrone& ally,
                             const TrackEstimate& track);

// Pseudo-human expert consulted during training.
class Advisor {
 public:
  virtual ~Advisor() = default;
  virtual AdvisorOutput advise(std::size_t ally_index, const sim::AllyDrone& ally,
                               const TrackEstimate& track) = 0;
  virtual void reset() {}
};

class HeuristicAdvisor final : public Advisor {
 public:
  explicit HeuristicAdvisor(HeuristicParams params) : params_(params) {}
  AdvisorOutput advise(std::size_t ally_index, const sim::AllyDrone& ally, const TrackEstimate& track) override;
  void reset() override { last_.clear(); }

 private:
  struct Last {
    std::size_t enemy;
    double distance;
  };
  HeuristicParams params_;
  std::map<std::size_t, Last> last_;
};

class PolicyAdvisor final : public Advisor {
 public:
  explicit PolicyAdvisor(rl::Checkpoint checkpoint) : checkpoint_(std::move(checkpoint)) {}
  static PolicyAdvisor load(const std::filesystem::path& path);
  AdvisorOutput advise(std::size_t ally_index, const sim::AllyDrone& ally, const TrackEstimate& track) override;

 private:
  rl::Checkpoint checkpoint_;
};

// Fuses this tick's detections into the previous tracks, then drops tracks of
// neutralized enemies and tracks older than max_age.
std::vector<TrackEstimate> refresh_tracks(const sim::WorldState& world,
                                          const std::vector<sensing::Detection>& detections,
                                          const std::vector<TrackEstimate>& previous, int max_age);

// Sensor suite + track memory of the ally side.
class TrackKeeper {
 public:
  TrackKeeper(sensing::SensorConfig sensors, int max_age) : sensors_(sensors), max_age_(max_age) {}
  const std::vector<TrackEstimate>& update(const sim::WorldState& world, Rng& rng);
  const std::vector<TrackEstimate>& tracks() const { return tracks_; }
  void reset() { tracks_.clear(); }

 private:
  sensing::SensorConfig sensors_;
  int max_age_;
  std::vector<TrackEstimate> tracks_;
};

// Sensor and effector rules around a drive action (u_MA, u_SR).
sim::AllyAction compose_action(const rl::DriveAction& drive, const sim::AllyDrone& ally,
                               const TrackEstimate* track, const ControlConfig& cfg);

// A drone's decision at one tick, waiting for the outcome to become a
// Transition.
struct PendingTransition {
  std::size_t ally = 0;
  std::size_t enemy = 0;
  rl::StateVec x{};
  rl::DriveAction u;
  rl::Source source = rl::Source::kAi;
  double r_h = 0.0;
  Vec2 track_pos;  // estimate the decision was made against
};

struct ControlInputs {
  // Without an actor the advisor drives every drone.
  const rl::Net* actor = nullptr;
  Advisor* advisor = nullptr;
  // Live operator takeovers (rank 1) keyed by ally index.
  const std::map<std::size_t, rl::DriveAction>* takeovers = nullptr;
  const rl::TrainerConfig* trainer = nullptr;
  // Exploration iteration; empty means greedy.
  std::optional<int> explore_k;
  bool collect = false;
};

struct ControlOutput {
  std::vector<sim::AllyAction> actions;
  std::vector<double> radar_actions;
  Assignment assignment;
  std::vector<PendingTransition> pending;
  std::size_t state_dim = rl::kStateDim;  // observed per-drone state length
};

ControlOutput control_step(const sim::WorldState& world, const std::vector<TrackEstimate>& tracks,
                           const ControlInputs& in, const ControlConfig& cfg, Rng& rng);

// Turns pending decisions into learning samples once the step outcome and the
// next tick's tracks are known. The team tracking reward is split equally;
// neutralization reward goes to the drone that earned it.
std::vector<rl::Transition> complete_transitions(const std::vector<PendingTransition>& pending,
                                                 const sim::StepOutcome& outcome,
                                                 const std::vector<TrackEstimate>& next_tracks,
                                                 double state_scale, double extra_r_h = 0.0);

}  // namespace hitl::hier
