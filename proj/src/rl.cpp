#include "hitl/rl.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hitl::rl {

std::string_view to_string(Source s) { return s == Source::kHuman ? "human" : "ai"; }

// --- TrainerConfig ---------------------------------------------------------

double TrainerConfig::epsilon(int k) const {
  return std::max(eps_min, eps0 * std::pow(eps_decay, static_cast<double>(std::max(k, 0))));
}

std::vector<int> TrainerConfig::actor_sizes() const {
  std::vector<int> s{kStateDim};
  s.insert(s.end(), actor_hidden.begin(), actor_hidden.end());
  s.push_back(kActionDim);
  return s;
}

std::vector<int> TrainerConfig::critic_sizes() const {
  std::vector<int> s{kStateDim + kActionDim};
  s.insert(s.end(), critic_hidden.begin(), critic_hidden.end());
  s.push_back(1);
  return s;
}

void TrainerConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  check(unit(eps0) && unit(eps_min) && unit(eps_decay), "TrainerConfig: epsilon schedule out of [0,1]");
  check(unit(phi_h), "TrainerConfig: phi_h out of [0,1]");
  check(unit(advice_prob), "TrainerConfig: advice_prob out of [0,1]");
  check(unit(beta), "TrainerConfig: beta out of [0,1]");
  check(lambda_q >= 0.0 && lambda_g >= 0.0, "TrainerConfig: regularization must be >= 0");
  check(alpha_q > 0.0 && alpha_g > 0.0, "TrainerConfig: step sizes must be > 0");
  check(alpha_decay > 0.0 && alpha_decay <= 1.0, "TrainerConfig: alpha_decay out of (0,1]");
  check(n_b > 0, "TrainerConfig: n_b must be > 0");
  check(gamma > 0.0 && gamma < 1.0, "TrainerConfig: gamma must lie in (0,1)");
  check(noise_std >= 0.0, "TrainerConfig: noise_std must be >= 0");
  check(buffer_capacity > 0, "TrainerConfig: buffer_capacity must be > 0");
  check(state_scale > 0.0, "TrainerConfig: state_scale must be > 0");
  check(checkpoint_interval > 0, "TrainerConfig: checkpoint_interval must be > 0");
  check(polyak_tau > 0.0 && polyak_tau <= 1.0, "TrainerConfig: polyak_tau out of (0,1]");
}

// --- buffers ---------------------------------------------------------------

RingBuffer::RingBuffer(std::size_t capacity) : data_(capacity) {
  if (capacity == 0) throw std::invalid_argument("RingBuffer: capacity must be > 0");
}

void RingBuffer::push(const Transition& tr) {
  data_[head_] = tr;
  head_ = (head_ + 1) % data_.size();
  size_ = std::min(size_ + 1, data_.size());
}

const Transition& RingBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("RingBuffer::at");
  const std::size_t oldest = (head_ + data_.size() - size_) % data_.size();
  return data_[(oldest + i) % data_.size()];
}

void push(ReplayBuffers& buffers, const Transition& tr) {
  (tr.source == Source::kHuman ? buffers.human : buffers.ai).push(tr);
}

Batch Batch::from(const std::vector<Transition>& samples) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  Batch b;
  b.x.resize(kStateDim, n);
  b.u.resize(kActionDim, n);
  b.r.resize(n);
  b.r_h.resize(n);
  b.x_next.resize(kStateDim, n);
  b.done.resize(n);
  b.human.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& tr = samples[static_cast<std::size_t>(j)];
    for (int d = 0; d < kStateDim; ++d) {
      b.x(d, j) = tr.x[static_cast<std::size_t>(d)];
      b.x_next(d, j) = tr.x_next[static_cast<std::size_t>(d)];
    }
    b.u(0, j) = tr.u.u_ma;
    b.u(1, j) = tr.u.u_sr;
    b.r(j) = tr.r;
    b.r_h(j) = tr.r_h;
    b.done(j) = tr.done ? 1.0 : 0.0;
    b.human(j) = tr.source == Source::kHuman ? 1.0 : 0.0;
    if (tr.source == Source::kHuman) ++b.human_count;
  }
  return b;
}

Batch sample_batch(const ReplayBuffers& buffers, const TrainerConfig& cfg, Rng& rng) {
  if (buffers.human.empty() && buffers.ai.empty()) {
    throw std::logic_error("sample_batch: both buffers are empty");
  }
  std::vector<Transition> picked;
  picked.reserve(static_cast<std::size_t>(cfg.n_b));
  for (int slot = 0; slot < cfg.n_b; ++slot) {
    const bool wants_human = rng.uniform01() < cfg.advice_prob;
    const bool from_human = buffers.ai.empty() || (wants_human && !buffers.human.empty());
    const RingBuffer& src = from_human ? buffers.human : buffers.ai;
    picked.push_back(src.at(rng.index(src.size())));
  }
  return Batch::from(picked);
}

// --- action selection ------------------------------------------------------

Eigen::MatrixXd to_matrix(const StateVec& x) {
  Eigen::MatrixXd m(kStateDim, 1);
  for (int d = 0; d < kStateDim; ++d) m(d, 0) = x[static_cast<std::size_t>(d)];
  return m;
}

namespace {

DriveAction from_column(const Eigen::MatrixXd& out) {
  return DriveAction{std::clamp(out(0, 0), -kPi, kPi), std::clamp(out(1, 0), 0.0, 1.0)};
}

}  // namespace

DriveAction greedy_action(const Net& actor, const StateVec& x) {
  return from_column(actor.forward(to_matrix(x)));
}

ActionChoice select_action(const Net& actor, const StateVec& x, int k, const TrainerConfig& cfg,
                           const std::optional<DriveAction>& human_action, Rng& rng) {
  if (human_action) {
    if (!(human_action->u_ma >= -kPi && human_action->u_ma <= kPi && human_action->u_sr >= 0.0 &&
          human_action->u_sr <= 1.0)) {
      throw std::invalid_argument("select_action: human action out of bounds");
    }
  }
  const double eps = cfg.epsilon(k);
  if (rng.uniform01() >= eps) return {greedy_action(actor, x), Source::kAi};
  if (human_action && rng.uniform01() < cfg.phi_h) return {*human_action, Source::kHuman};

  Eigen::MatrixXd raw = actor.forward_raw(to_matrix(x));
  for (Eigen::Index i = 0; i < raw.rows(); ++i) raw(i, 0) += rng.normal(0.0, cfg.noise_std);
  return {from_column(squash(actor.head(), raw)), Source::kAi};
}

// --- losses ----------------------------------------------------------------

Eigen::MatrixXd critic_input(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) {
  Eigen::MatrixXd in(x.rows() + u.rows(), x.cols());
  in.topRows(x.rows()) = x;
  in.bottomRows(u.rows()) = u;
  return in;
}

Eigen::VectorXd q_target(const Batch& batch, const Net& critic, const Net& actor, const TrainerConfig& cfg) {
  if (batch.size() == 0) throw std::invalid_argument("q_target: empty batch");
  const Eigen::MatrixXd next_action = actor.forward(batch.x_next);
  const Eigen::MatrixXd next_q = critic.forward(critic_input(batch.x_next, next_action));
  Eigen::VectorXd t(batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    t(j) = batch.r(j) + batch.r_h(j);
    if (batch.done(j) == 0.0) t(j) += cfg.gamma * next_q(0, j);
  }
  return t;
}

GradResult critic_loss_gradient(const Net& critic, const Batch& batch, const Eigen::VectorXd& targets,
                                const TrainerConfig& cfg) {
  const double n = static_cast<double>(batch.size());
  return grad(critic, critic_input(batch.x, batch.u),
              [&](const Eigen::MatrixXd& q, Eigen::MatrixXd& d_q) {
                const Eigen::RowVectorXd resid = q.row(0) - targets.transpose();
                d_q.row(0) = (2.0 / n) * (resid + cfg.lambda_q * q.row(0));
                return (resid.squaredNorm() + cfg.lambda_q * q.row(0).squaredNorm()) / n;
              });
}

double critic_loss(const Net& critic, const Batch& batch, const Eigen::VectorXd& targets,
                   const TrainerConfig& cfg) {
  const Eigen::MatrixXd q = critic.forward(critic_input(batch.x, batch.u));
  const Eigen::RowVectorXd resid = q.row(0) - targets.transpose();
  return (resid.squaredNorm() + cfg.lambda_q * q.row(0).squaredNorm()) / static_cast<double>(batch.size());
}

namespace {

struct ActorEval {
  double loss = 0.0;
  Tape actor_tape;
  Eigen::MatrixXd d_action;  // dLoss/d(actor output)
};

// u_MA is an angle: its residual is taken the short way around the circle.
// Samples excluded from cloning get a zero residual.
Eigen::MatrixXd action_error(const Eigen::MatrixXd& a, const Batch& batch, const TrainerConfig& cfg) {
  Eigen::MatrixXd err = a - batch.u;
  for (Eigen::Index j = 0; j < err.cols(); ++j) {
    err(0, j) = wrap_angle(err(0, j));
    if (cfg.bc_human_only && batch.human.size() == err.cols() && batch.human(j) == 0.0) err.col(j).setZero();
  }
  return err;
}

ActorEval evaluate_actor(const Net& actor, const Net& critic, const Batch& batch, const TrainerConfig& cfg) {
  ActorEval ev;
  const double n = static_cast<double>(batch.size());
  const Eigen::MatrixXd a = actor.forward(batch.x, &ev.actor_tape);

  Tape critic_tape;
  const Eigen::MatrixXd q = critic.forward(critic_input(batch.x, a), &critic_tape);
  Eigen::MatrixXd d_critic_in;
  critic.backward(critic_tape, Eigen::MatrixXd::Ones(1, q.cols()), &d_critic_in);
  const Eigen::MatrixXd dq_da = d_critic_in.bottomRows(kActionDim);

  const Eigen::MatrixXd err = action_error(a, batch, cfg);
  ev.loss = (cfg.beta * -q.sum() + (1.0 - cfg.beta) * err.squaredNorm() + cfg.lambda_g * a.squaredNorm()) / n;
  ev.d_action = (-cfg.beta * dq_da + 2.0 * (1.0 - cfg.beta) * err + 2.0 * cfg.lambda_g * a) / n;
  return ev;
}

}  // namespace

double actor_loss(const Net& actor, const Net& critic, const Batch& batch, const TrainerConfig& cfg) {
  const double n = static_cast<double>(batch.size());
  const Eigen::MatrixXd a = actor.forward(batch.x);
  const Eigen::MatrixXd q = critic.forward(critic_input(batch.x, a));
  return (cfg.beta * -q.sum() + (1.0 - cfg.beta) * action_error(a, batch, cfg).squaredNorm() +
          cfg.lambda_g * a.squaredNorm()) / n;
}

GradResult actor_loss_gradient(const Net& actor, const Net& critic, const Batch& batch,
                               const TrainerConfig& cfg) {
  ActorEval ev = evaluate_actor(actor, critic, batch, cfg);
  return GradResult{ev.loss, actor.backward(ev.actor_tape, ev.d_action)};
}

double critic_step(Net& critic, const Batch& batch, const Eigen::VectorXd& targets,
                   const TrainerConfig& cfg) {
  GradResult g = critic_loss_gradient(critic, batch, targets, cfg);
  if (!std::isfinite(g.loss) || !std::isfinite(max_abs(g.grads))) {
    throw DivergenceError("critic loss diverged");
  }
  critic.descend(g.grads, cfg.alpha_q);
  return g.loss;
}

double actor_step(Net& actor, const Net& critic, const Batch& batch, const TrainerConfig& cfg) {
  GradResult g = actor_loss_gradient(actor, critic, batch, cfg);
  if (!std::isfinite(g.loss) || !std::isfinite(max_abs(g.grads))) {
    throw DivergenceError("actor loss diverged");
  }
  actor.descend(g.grads, cfg.alpha_g);
  return g.loss;
}

// --- config text -----------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view key, std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("trainer config: bad number for '" + std::string(key) + "'");
  }
  return v;
}

std::string fmt_sizes(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_sizes(std::string_view key, std::string_view s) {
  std::vector<int> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const std::string_view tok = s.substr(0, comma);
    int v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || v <= 0) {
      throw std::invalid_argument("trainer config: bad size list for '" + std::string(key) + "'");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::string to_text(const TrainerConfig& c) {
  std::ostringstream os;
  auto kv = [&os](const char* k, const std::string& v) { os << k << '=' << v << '\n'; };
  kv("eps0", fmt_double(c.eps0));
  kv("eps_decay", fmt_double(c.eps_decay));
  kv("eps_min", fmt_double(c.eps_min));
  kv("phi_h", fmt_double(c.phi_h));
  kv("advice_prob", fmt_double(c.advice_prob));
  kv("beta", fmt_double(c.beta));
  kv("bc_human_only", c.bc_human_only ? "1" : "0");
  kv("lambda_q", fmt_double(c.lambda_q));
  kv("lambda_g", fmt_double(c.lambda_g));
  kv("alpha_q", fmt_double(c.alpha_q));
  kv("alpha_g", fmt_double(c.alpha_g));
  kv("alpha_decay", fmt_double(c.alpha_decay));
  kv("n_b", std::to_string(c.n_b));
  kv("gamma", fmt_double(c.gamma));
  kv("noise_std", fmt_double(c.noise_std));
  kv("buffer_capacity", std::to_string(c.buffer_capacity));
  kv("warmup", std::to_string(c.warmup));
  kv("state_scale", fmt_double(c.state_scale));
  kv("checkpoint_interval", std::to_string(c.checkpoint_interval));
  kv("actor_hidden", fmt_sizes(c.actor_hidden));
  kv("critic_hidden", fmt_sizes(c.critic_hidden));
  kv("target_networks", c.target_networks ? "1" : "0");
  kv("polyak_tau", fmt_double(c.polyak_tau));
  return os.str();
}

bool set_trainer_field(TrainerConfig& c, std::string_view key, std::string_view value) {
  auto num = [&] { return parse_double(key, value); };
  auto count = [&] { return static_cast<std::size_t>(std::llround(num())); };
  if (key == "eps0") c.eps0 = num();
  else if (key == "eps_decay") c.eps_decay = num();
  else if (key == "eps_min") c.eps_min = num();
  else if (key == "phi_h") c.phi_h = num();
  else if (key == "advice_prob") c.advice_prob = num();
  else if (key == "beta") c.beta = num();
  else if (key == "bc_human_only") c.bc_human_only = num() != 0.0;
  else if (key == "lambda_q") c.lambda_q = num();
  else if (key == "lambda_g") c.lambda_g = num();
  else if (key == "alpha_q") c.alpha_q = num();
  else if (key == "alpha_g") c.alpha_g = num();
  else if (key == "alpha_decay") c.alpha_decay = num();
  else if (key == "n_b") c.n_b = static_cast<int>(count());
  else if (key == "gamma") c.gamma = num();
  else if (key == "noise_std") c.noise_std = num();
  else if (key == "buffer_capacity") c.buffer_capacity = count();
  else if (key == "warmup") c.warmup = count();
  else if (key == "state_scale") c.state_scale = num();
  else if (key == "checkpoint_interval") c.checkpoint_interval = static_cast<int>(count());
  else if (key == "actor_hidden") c.actor_hidden = parse_sizes(key, value);
  else if (key == "critic_hidden") c.critic_hidden = parse_sizes(key, value);
  else if (key == "target_networks") c.target_networks = num() != 0.0;
  else if (key == "polyak_tau") c.polyak_tau = num();
  else return false;
  return true;
}

TrainerConfig trainer_config_from_text(std::string_view text) {
  TrainerConfig c;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("trainer config: missing '='");
    if (!set_trainer_field(c, line.substr(0, eq), line.substr(eq + 1))) {
      throw std::invalid_argument("trainer config: unknown key '" + std::string(line.substr(0, eq)) + "'");
    }
  }
  return c;
}

// --- checkpoints -----------------------------------------------------------

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::string_view bytes(std::size_t n) {
    if (in_.size() - pos_ < n) throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint truncated");
    const std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    const std::string_view s = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return v;
  }
  double f64() {
    const std::string_view s = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_net(Writer& w, const Net& net) {
  w.u8(net.head() == Head::kActor ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes()) w.u32(static_cast<std::uint32_t>(s));
  for (const Layer& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) w.f64(l.w(r, c));
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) w.f64(l.b(r));
  }
}

Net read_net(Reader& rd) {
  constexpr std::uint32_t kMaxLayers = 64;
  constexpr std::uint32_t kMaxWidth = 1 << 16;
  const std::uint8_t head = rd.u8();
  if (head > 1) throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: bad head tag");
  const std::uint32_t n = rd.u32();
  if (n < 2 || n > kMaxLayers) throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: bad layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t s = rd.u32();
    if (s == 0 || s > kMaxWidth) throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: bad layer size");
    sizes.push_back(static_cast<int>(s));
  }
  Net net;
  try {
    net = Net(sizes, head == 1 ? Head::kActor : Head::kLinear);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::kCorrupt, std::string("checkpoint: ") + e.what());
  }
  for (Layer& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = rd.f64();
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = rd.f64();
  }
  return net;
}

}  // namespace

std::string encode_checkpoint(const Net& actor, const Net& critic, const TrainerConfig& cfg) {
  Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(2);
  write_net(w, actor);
  write_net(w, critic);
  const std::string text = to_text(cfg);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader rd(bytes);
  if (bytes.size() < kCheckpointMagic.size() || rd.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: bad magic");
  }
  const std::uint32_t version = rd.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersion,
                          "checkpoint: format version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  if (rd.u32() != 2) throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: expected two networks");
  Checkpoint ck;
  ck.actor = read_net(rd);
  ck.critic = read_net(rd);
  const std::uint32_t len = rd.u32();
  try {
    ck.config = trainer_config_from_text(rd.bytes(len));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::kCorrupt, std::string("checkpoint: ") + e.what());
  }
  if (!rd.at_end()) throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: trailing bytes");
  if (ck.actor.head() != Head::kActor || ck.critic.head() != Head::kLinear) {
    throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: network heads swapped");
  }
  return ck;
}

void save_checkpoint(const Net& actor, const Net& critic, const TrainerConfig& cfg,
                     const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(actor, critic, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const TrainerConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.actor.layer_sizes() != expected.actor_sizes() || ck.critic.layer_sizes() != expected.critic_sizes()) {
    throw CheckpointError(CheckpointError::Kind::kShape, "checkpoint layer sizes do not match configuration");
  }
  return ck;
}

}  // namespace hitl::rl
