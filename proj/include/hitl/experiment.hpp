#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hitl/harness.hpp"
#include "hitl/hierarchy.hpp"
#include "hitl/rl.hpp"
#include "hitl/scenario.hpp"
#include "hitl/trainer.hpp"

// Repeated training runs, checkpoint evaluation, and the config file.
namespace hitl::harness {

enum class AdvisorKind { kAuto, kHeuristic, kNone };

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int repetitions = 5;
  int episodes = 200;
  int n_eval = 100;
  int n_heldout = 100;
  std::optional<ScenarioKind> heldout = ScenarioKind::kDecoy;
  bool evaluate = true;
  int workers = 1;
  // kAuto: heuristic advisor when advice_prob > 0, none otherwise.
  AdvisorKind advisor = AdvisorKind::kAuto;
  hier::HeuristicParams heuristic;
  ScenarioSpec scenario = ScenarioSpec::make(ScenarioKind::kRandom);
  rl::TrainerConfig trainer;

  bool uses_advisor() const;
  // Held-out spec: same world, sensors and effector settings, other layout.
  ScenarioSpec heldout_spec() const;
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// INI text: [experiment] [trainer] [world] [sensors] [scenario] [advisor].
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Every key with its current value.
std::string to_ini(const ExperimentConfig& cfg);

// Per-repetition training seed and the evaluation seeds.
std::uint64_t repetition_seed(std::uint64_t master, int rep);
std::uint64_t eval_seed(std::uint64_t master);
std::uint64_t heldout_seed(std::uint64_t master);

std::string checkpoint_name(int episode);
void write_metrics_header(std::ostream& os);
void write_metrics_row(const rl::MetricsRow& row, std::ostream& os);

struct ExperimentOptions {
  // Polled between episodes; when it becomes true the run winds down and
  // the manifest is marked incomplete.
  const std::atomic<bool>* stop = nullptr;
  std::ostream* log = nullptr;
};

struct RepetitionOutcome {
  int rep = 0;
  std::uint64_t seed = 0;
  int episodes_completed = 0;
  std::vector<int> checkpoint_episodes;
  std::vector<std::shared_ptr<const rl::Net>> actors;  // parallel to checkpoint_episodes
  std::size_t human_transitions = 0;
  std::size_t ai_transitions = 0;
};

struct ExperimentResult {
  bool complete = false;
  std::vector<RepetitionOutcome> reps;
  std::optional<EvalReport> train_eval;
  std::optional<EvalReport> heldout_eval;
  double wall_time = 0.0;  // seconds
};

// Artifacts under out: config.ini, manifest.json, rep<r>/metrics.csv,
// rep<r>/ckpt_<episode>.bin, eval_<scenario>.csv, heldout_<scenario>.csv,
// wall_time.txt. Everything except wall_time.txt depends only on the config.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                const ExperimentOptions& options = {});

std::string arm_name(double advice_prob);

}  // namespace hitl::harness
