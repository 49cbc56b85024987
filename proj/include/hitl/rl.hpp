#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hitl/common.hpp"
#include "hitl/net.hpp"

// Human-in-the-loop actor-critic learner.
namespace hitl::rl {

inline constexpr int kStateDim = 2;   // normalized relative position to assigned enemy
inline constexpr int kActionDim = 2;  // (u_MA, u_SR)

using StateVec = std::array<double, kStateDim>;

// Meters per unit of normalized state.
inline constexpr double kDefaultStateScale = 30.0;

struct DriveAction {
  double u_ma = 0.0;
  double u_sr = 0.0;
  bool operator==(const DriveAction&) const = default;
};

enum class Source { kHuman, kAi };

std::string_view to_string(Source s);

struct TrainerConfig {
  // Exploration rate eps_k = max(eps_min, eps0 * eps_decay^k), k = episode.
  double eps0 = 1.0;
  double eps_decay = 0.995;
  double eps_min = 0.05;
  double phi_h = 0.5;        // human takeover probability during exploration
  double advice_prob = 0.2;  // per-slot probability of sampling the human buffer
  double beta = 0.02;        // 1 = self learning, 0 = imitation
  // Cloning term over human samples only (expert actions), or over every
  // sample in the batch.
  bool bc_human_only = true;
  double lambda_q = 0.0;
  double lambda_g = 0.0;
  double alpha_q = 1e-3;
  double alpha_g = 2e-2;
  // Step sizes at episode k are alpha * alpha_decay^k.
  double alpha_decay = 0.995;
  int n_b = 64;
  double gamma = 0.99;
  double noise_std = 0.3;  // exploration noise on the pre-squash actor output
  std::size_t buffer_capacity = 100000;
  std::size_t warmup = 64;
  double state_scale = kDefaultStateScale;
  int checkpoint_interval = 10;
  std::vector<int> actor_hidden{64, 64};
  std::vector<int> critic_hidden{64, 64};
  bool target_networks = false;
  double polyak_tau = 0.005;

  double epsilon(int k) const;
  std::vector<int> actor_sizes() const;
  std::vector<int> critic_sizes() const;
  void validate() const;
};

struct Transition {
  StateVec x{};
  DriveAction u;
  double r = 0.0;
  double r_h = 0.0;
  StateVec x_next{};
  bool done = false;
  Source source = Source::kAi;
};

// Fixed-capacity FIFO.
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity);
  void push(const Transition& tr);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return data_.size(); }
  bool empty() const { return size_ == 0; }
  // 0 is the oldest retained item.
  const Transition& at(std::size_t i) const;

 private:
  std::vector<Transition> data_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
};

struct ReplayBuffers {
  explicit ReplayBuffers(std::size_t capacity) : human(capacity), ai(capacity) {}
  RingBuffer human;
  RingBuffer ai;
};

// Column-per-sample view of a minibatch.
struct Batch {
  Eigen::MatrixXd x;       // kStateDim x n
  Eigen::MatrixXd u;       // kActionDim x n
  Eigen::VectorXd r;       // n
  Eigen::VectorXd r_h;     // n
  Eigen::MatrixXd x_next;  // kStateDim x n
  Eigen::VectorXd done;    // n, 0 or 1
  Eigen::VectorXd human;   // n, 1 for human-sourced samples
  std::size_t human_count = 0;

  Eigen::Index size() const { return x.cols(); }
  static Batch from(const std::vector<Transition>& samples);
};

struct ActionChoice {
  DriveAction action;
  Source source = Source::kAi;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Eigen::MatrixXd to_matrix(const StateVec& x);
DriveAction greedy_action(const Net& actor, const StateVec& x);

ActionChoice select_action(const Net& actor, const StateVec& x, int k, const TrainerConfig& cfg,
                           const std::optional<DriveAction>& human_action, Rng& rng);

void push(ReplayBuffers& buffers, const Transition& tr);

Batch sample_batch(const ReplayBuffers& buffers, const TrainerConfig& cfg, Rng& rng);

// Critic input: state rows stacked over action rows.
Eigen::MatrixXd critic_input(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u);

Eigen::VectorXd q_target(const Batch& batch, const Net& critic, const Net& actor, const TrainerConfig& cfg);

// Loss values without updating; used by the step functions and the tests.
double critic_loss(const Net& critic, const Batch& batch, const Eigen::VectorXd& targets,
                   const TrainerConfig& cfg);
double actor_loss(const Net& actor, const Net& critic, const Batch& batch, const TrainerConfig& cfg);

// Gradients of critic_loss / actor_loss with respect to the network being
// trained. The critic is held fixed inside actor_loss_gradient.
GradResult critic_loss_gradient(const Net& critic, const Batch& batch, const Eigen::VectorXd& targets,
                                const TrainerConfig& cfg);
GradResult actor_loss_gradient(const Net& actor, const Net& critic, const Batch& batch,
                               const TrainerConfig& cfg);

// One gradient descent step; return the pre-update loss. Throw
// DivergenceError, leaving the network untouched, on a non-finite loss.
double critic_step(Net& critic, const Batch& batch, const Eigen::VectorXd& targets,
                   const TrainerConfig& cfg);
double actor_step(Net& actor, const Net& critic, const Batch& batch, const TrainerConfig& cfg);

// --- checkpoints -----------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kCorrupt, kVersion, kShape };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::string_view kCheckpointMagic = "HITLCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Net actor;
  Net critic;
  TrainerConfig config;
};

std::string encode_checkpoint(const Net& actor, const Net& critic, const TrainerConfig& cfg);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Net& actor, const Net& critic, const TrainerConfig& cfg,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Loads and checks the stored shapes against the expected configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path, const TrainerConfig& expected);

// Flat key=value rendering of the trainer settings.
std::string to_text(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_text(std::string_view text);
// Returns false for an unknown key; throws std::invalid_argument on a bad value.
bool set_trainer_field(TrainerConfig& cfg, std::string_view key, std::string_view value);

}  // namespace hitl::rl
