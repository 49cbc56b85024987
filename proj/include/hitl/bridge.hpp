#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hitl/harness.hpp"
#include "hitl/hierarchy.hpp"
#include "hitl/net.hpp"
#include "hitl/rl.hpp"
#include "hitl/scenario.hpp"
#include "hitl/sim.hpp"

// Live operator session: world frames out, takeovers and rewards in.
namespace hitl::bridge {

// --- wire schema -----------------------------------------------------------

struct EntityView {
  std::string kind;  // ally | enemy | radar
  std::size_t id = 0;
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;
  bool functional = true;
  std::optional<int> payload_seen;  // enemies only, once an EO sensor saw it
  bool operator==(const EntityView&) const = default;
};

struct TrackView {
  std::size_t id = 0;  // enemy index
  double x = 0.0;
  double y = 0.0;
  bool operator==(const TrackView&) const = default;
};

struct Frame {
  std::uint64_t tick = 0;   // world time; restarts with each trial
  std::uint64_t trial = 0;
  std::vector<EntityView> entities;
  std::vector<TrackView> tracks;
  // (ally, enemy) pairs of the tactics layer.
  std::vector<std::pair<std::size_t, std::size_t>> assignments;
  sim::Termination term = sim::Termination::kRunning;
  double rt = 0.0;   // tracking reward of the step that produced this frame
  double rn = 0.0;   // neutralization reward of that step
  double r_h = 0.0;  // operator reward applied to that step
  std::vector<std::size_t> taken_over;  // allies under operator control
  bool operator==(const Frame&) const = default;
};

struct Takeover {
  std::size_t drone_id = 0;
  double u_ma = 0.0;
  double u_sr = 0.0;
  bool operator==(const Takeover&) const = default;
};
struct Release {
  std::size_t drone_id = 0;
  bool operator==(const Release&) const = default;
};
struct Reward {
  double value = 0.0;
  bool operator==(const Reward&) const = default;
};
struct StartTrial {
  harness::ScenarioKind scenario = harness::ScenarioKind::kRandom;
  std::optional<std::uint64_t> seed;
  bool operator==(const StartTrial&) const = default;
};
struct Pause {
  bool operator==(const Pause&) const = default;
};
struct Resume {
  bool operator==(const Resume&) const = default;
};

using OperatorMessage = std::variant<Takeover, Release, Reward, StartTrial, Pause, Resume>;

class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::string field, const std::string& what) : std::runtime_error(what), field_(std::move(field)) {}
  // Name of the offending field, "type" for an unknown message kind, or
  // empty when the text is not a JSON object.
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

std::string encode_frame(const Frame& f);
Frame decode_frame(std::string_view text);

std::string encode_operator(const OperatorMessage& m);
OperatorMessage decode_operator(std::string_view text);

std::string encode_error(const std::string& field, const std::string& message);

Frame make_frame(const sim::WorldState& world, const std::vector<sensing::TrackEstimate>& tracks,
                 const hier::Assignment& assignment, double rt, double rn, double r_h,
                 sim::Termination term, const std::vector<std::size_t>& taken_over);

// --- session ---------------------------------------------------------------

struct SessionConfig {
  harness::ScenarioSpec scenario = harness::ScenarioSpec::make(harness::ScenarioKind::kRandom);
  // Greedy policy; without one the heuristic advisor drives.
  std::shared_ptr<const rl::Net> actor;
  double state_scale = rl::kDefaultStateScale;
  std::uint64_t seed = 1;
  std::size_t outbox_capacity = 256;
  double tick_rate = 20.0;  // ticks per second in serve()
};

// Learning samples produced at one tick, with the r_H they carry.
struct TickRecord {
  std::uint64_t tick = 0;
  double r_h = 0.0;
  std::vector<std::size_t> taken_over;
  std::vector<rl::Transition> transitions;
};

// The simulation side. post() and disconnect() may be called from any
// thread; everything else belongs to the loop thread. Messages take effect
// at the next tick() boundary, in arrival order.
class Session {
 public:
  explicit Session(SessionConfig cfg);

  void post(OperatorMessage m);
  // Decodes; a malformed message queues an error reply and returns false.
  bool post_text(std::string_view text);
  // Operator gone: every takeover is released at the next tick.
  void disconnect();

  // Drains the mailbox, then advances one step unless paused or finished.
  // Returns the emitted frame, which is also queued on the outbox.
  std::optional<Frame> tick();

  // Outbound messages (frames and error replies), oldest first. The queue
  // is bounded; on overflow the oldest message is dropped and counted.
  std::optional<std::string> pop_outbox();
  std::uint64_t dropped() const;

  bool paused() const { return paused_; }
  bool running() const { return term_ == sim::Termination::kRunning; }
  sim::Termination termination() const { return term_; }
  const sim::WorldState& world() const { return world_; }
  std::uint64_t ticks_emitted() const { return emitted_; }
  std::uint64_t trial() const { return trials_; }
  const std::map<std::size_t, rl::DriveAction>& takeovers() const { return takeovers_; }
  const std::vector<TickRecord>& records() const { return records_; }
  const harness::TrajectoryLog& trajectory() const { return log_; }
  const harness::TrialResult& result() const { return result_; }
  const SessionConfig& config() const { return cfg_; }

  // Begins a fresh trial; the bridge's StartTrial message lands here.
  void start(harness::ScenarioKind kind, std::optional<std::uint64_t> seed = std::nullopt);

 private:
  struct Disconnect {};
  using Event = std::variant<OperatorMessage, Disconnect>;

  void apply(const OperatorMessage& m, double& reward);
  void push_out(std::string msg);

  SessionConfig cfg_;
  hier::ControlConfig control_;
  harness::ScenarioSpec spec_;
  std::unique_ptr<hier::HeuristicAdvisor> advisor_;

  mutable std::mutex in_mu_;
  std::deque<Event> inbox_;
  mutable std::mutex out_mu_;
  std::deque<std::string> outbox_;
  std::uint64_t dropped_ = 0;

  sim::WorldState world_;
  hier::TrackKeeper keeper_;
  Rng world_rng_{0};
  Rng sense_rng_{0};
  Rng control_rng_{0};
  std::map<std::size_t, rl::DriveAction> takeovers_;
  bool paused_ = false;
  sim::Termination term_ = sim::Termination::kRunning;
  std::uint64_t emitted_ = 0;
  std::uint64_t trials_ = 0;
  double discount_ = 1.0;
  std::vector<TickRecord> records_;
  harness::TrajectoryLog log_;
  harness::TrialResult result_;
  sim::WorldState initial_;
};

// --- transport -------------------------------------------------------------

// Minimal RFC 6455 text-message channel over TCP.
namespace ws {

std::string accept_key(std::string_view client_key);

// One encoded frame; clients must mask, servers must not.
std::string encode_frame(std::string_view payload, std::uint8_t opcode, bool mask, std::uint32_t mask_key = 0);

struct Parsed {
  bool fin = true;
  std::uint8_t opcode = 0;
  std::string payload;
  std::size_t consumed = 0;
};
// nullopt until buf holds a complete frame. Throws std::runtime_error on a
// frame that violates the protocol (want_mask: require a masked frame).
std::optional<Parsed> parse_frame(std::string_view buf, bool want_mask);

// Blocking client, used by tests and scripted operators.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port, int timeout_ms = 5000);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send_text(std::string_view text);
  // Next text message, or nullopt when the server closed or timed out.
  std::optional<std::string> receive(int timeout_ms = 5000);
  void close();

 private:
  int fd_ = -1;
  std::string buf_;
  std::uint32_t mask_state_ = 0x1234567u;
};

}  // namespace ws

struct ServeOptions {
  std::uint16_t port = 8765;   // 0 picks a free port
  std::string host = "127.0.0.1";
  // Stop after this many ticks (0 = until stop is set).
  std::uint64_t max_ticks = 0;
  const std::atomic<bool>* stop = nullptr;
  // Return once the current trial has finished and its frames are sent.
  bool exit_when_finished = false;
  // Called once the socket is listening, with the bound port.
  std::function<void(std::uint16_t)> on_listen;
};

// Paces session.tick() at cfg.tick_rate and bridges one operator
// connection at a time to it. Returns when stopped.
void serve(Session& session, const ServeOptions& options);

}  // namespace hitl::bridge
