#include "hitl/bridge.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

namespace hitl::bridge {

using nlohmann::json;

// --- wire schema -----------------------------------------------------------

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) { throw DecodeError(field, what); }

json parse_object(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    fail("", "message is not valid JSON");
  }
  if (!j.is_object()) fail("", "message is not a JSON object");
  return j;
}

const json& need(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) fail(field, std::string("missing field '") + field + "'");
  return *it;
}

double number(const json& j, const char* field) {
  const json& v = need(j, field);
  if (!v.is_number()) fail(field, std::string("field '") + field + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(field, std::string("field '") + field + "' must be finite");
  return d;
}

std::uint64_t count(const json& j, const char* field) {
  const json& v = need(j, field);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    fail(field, std::string("field '") + field + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string text(const json& j, const char* field) {
  const json& v = need(j, field);
  if (!v.is_string()) fail(field, std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

bool flag(const json& j, const char* field) {
  const json& v = need(j, field);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return v.get<int>() == 1;
  fail(field, std::string("field '") + field + "' must be 0 or 1");
}

void only(const json& j, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) fail(it.key(), "unexpected field '" + it.key() + "'");
  }
}

void in_range(double v, double lo, double hi, const char* field) {
  if (v < lo || v > hi) {
    fail(field, std::string("field '") + field + "' out of range [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
  }
}

}  // namespace

std::string encode_frame(const Frame& f) {
  json ents = json::array();
  for (const EntityView& e : f.entities) {
    json o{{"k", e.kind}, {"id", e.id}, {"x", e.x}, {"y", e.y}, {"phi", e.phi}, {"f", e.functional ? 1 : 0}};
    if (e.payload_seen) o["ps"] = *e.payload_seen;
    ents.push_back(std::move(o));
  }
  json tracks = json::array();
  for (const TrackView& t : f.tracks) tracks.push_back({{"id", t.id}, {"x", t.x}, {"y", t.y}});
  json assign = json::array();
  for (const auto& [a, e] : f.assignments) assign.push_back({a, e});
  json j{{"type", "frame"},
         {"tick", f.tick},
         {"trial", f.trial},
         {"entities", ents},
         {"tracks", tracks},
         {"assign", assign},
         {"term", std::string(sim::to_string(f.term))},
         {"rt", f.rt},
         {"rn", f.rn},
         {"rh", f.r_h},
         {"ctl", f.taken_over}};
  return j.dump();
}

Frame decode_frame(std::string_view raw) {
  const json j = parse_object(raw);
  if (text(j, "type") != "frame") fail("type", "not a frame");
  Frame f;
  f.tick = count(j, "tick");
  f.trial = count(j, "trial");
  const json& ents = need(j, "entities");
  if (!ents.is_array()) fail("entities", "field 'entities' must be an array");
  for (const json& e : ents) {
    if (!e.is_object()) fail("entities", "entity is not an object");
    EntityView v;
    v.kind = text(e, "k");
    if (v.kind != "ally" && v.kind != "enemy" && v.kind != "radar") fail("k", "unknown entity kind '" + v.kind + "'");
    v.id = count(e, "id");
    v.x = number(e, "x");
    v.y = number(e, "y");
    v.phi = number(e, "phi");
    v.functional = flag(e, "f");
    if (e.contains("ps")) v.payload_seen = static_cast<int>(count(e, "ps"));
    f.entities.push_back(std::move(v));
  }
  const json& tracks = need(j, "tracks");
  if (!tracks.is_array()) fail("tracks", "field 'tracks' must be an array");
  for (const json& t : tracks) f.tracks.push_back({count(t, "id"), number(t, "x"), number(t, "y")});
  const json& assign = need(j, "assign");
  if (!assign.is_array()) fail("assign", "field 'assign' must be an array");
  for (const json& p : assign) {
    if (!p.is_array() || p.size() != 2) fail("assign", "assignment must be an [ally, enemy] pair");
    f.assignments.emplace_back(p[0].get<std::size_t>(), p[1].get<std::size_t>());
  }
  try {
    f.term = sim::termination_from_string(text(j, "term"));
  } catch (const std::invalid_argument&) {
    fail("term", "unknown termination");
  }
  f.rt = number(j, "rt");
  f.rn = number(j, "rn");
  f.r_h = number(j, "rh");
  const json& ctl = need(j, "ctl");
  if (!ctl.is_array()) fail("ctl", "field 'ctl' must be an array");
  for (const json& id : ctl) f.taken_over.push_back(id.get<std::size_t>());
  return f;
}

std::string encode_operator(const OperatorMessage& m) {
  json j = std::visit(
      [](const auto& msg) -> json {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Takeover>) {
          return {{"type", "takeover"}, {"drone_id", msg.drone_id}, {"u_MA", msg.u_ma}, {"u_SR", msg.u_sr}};
        } else if constexpr (std::is_same_v<T, Release>) {
          return {{"type", "release"}, {"drone_id", msg.drone_id}};
        } else if constexpr (std::is_same_v<T, Reward>) {
          return {{"type", "reward"}, {"value", msg.value}};
        } else if constexpr (std::is_same_v<T, StartTrial>) {
          json o{{"type", "start"}, {"scenario", std::string(harness::to_string(msg.scenario))}};
          if (msg.seed) o["seed"] = *msg.seed;
          return o;
        } else if constexpr (std::is_same_v<T, Pause>) {
          return {{"type", "pause"}};
        } else {
          return {{"type", "resume"}};
        }
      },
      m);
  return j.dump();
}

OperatorMessage decode_operator(std::string_view raw) {
  const json j = parse_object(raw);
  const std::string type = text(j, "type");
  if (type == "takeover") {
    only(j, {"type", "drone_id", "u_MA", "u_SR"});
    Takeover t;
    t.drone_id = count(j, "drone_id");
    t.u_ma = number(j, "u_MA");
    t.u_sr = number(j, "u_SR");
    in_range(t.u_ma, -kPi, kPi, "u_MA");
    in_range(t.u_sr, 0.0, 1.0, "u_SR");
    return t;
  }
  if (type == "release") {
    only(j, {"type", "drone_id"});
    return Release{count(j, "drone_id")};
  }
  if (type == "reward") {
    only(j, {"type", "value"});
    Reward r{number(j, "value")};
    in_range(r.value, -1.0, 1.0, "value");
    return r;
  }
  if (type == "start") {
    only(j, {"type", "scenario", "seed"});
    StartTrial s;
    const std::string kind = text(j, "scenario");
    if (kind != "random" && kind != "overloaded" && kind != "decoy") fail("scenario", "unknown scenario '" + kind + "'");
    s.scenario = harness::scenario_kind_from_string(kind);
    if (j.contains("seed")) s.seed = count(j, "seed");
    return s;
  }
  if (type == "pause") {
    only(j, {"type"});
    return Pause{};
  }
  if (type == "resume") {
    only(j, {"type"});
    return Resume{};
  }
  fail("type", "unknown message type '" + type + "'");
}

std::string encode_error(const std::string& field, const std::string& message) {
  return json{{"type", "error"}, {"field", field}, {"message", message}}.dump();
}

Frame make_frame(const sim::WorldState& world, const std::vector<sensing::TrackEstimate>& tracks,
                 const hier::Assignment& assignment, double rt, double rn, double r_h, sim::Termination term,
                 const std::vector<std::size_t>& taken_over) {
  Frame f;
  f.tick = static_cast<std::uint64_t>(world.t);
  for (std::size_t i = 0; i < world.allies.size(); ++i) {
    const sim::AllyDrone& a = world.allies[i];
    f.entities.push_back({"ally", i, a.p.x, a.p.y, a.phi, a.functional, std::nullopt});
  }
  for (std::size_t j = 0; j < world.enemies.size(); ++j) {
    const sim::EnemyDrone& e = world.enemies[j];
    EntityView v{"enemy", j, e.p.x, e.p.y, 0.0, e.functional, std::nullopt};
    for (const sensing::TrackEstimate& t : tracks) {
      if (t.enemy_index == j) v.payload_seen = t.payload;
    }
    f.entities.push_back(std::move(v));
  }
  for (std::size_t k = 0; k < world.radars.size(); ++k) {
    const sim::GroundRadar& r = world.radars[k];
    f.entities.push_back({"radar", k, r.p.x, r.p.y, r.phi, true, std::nullopt});
  }
  for (const sensing::TrackEstimate& t : tracks) f.tracks.push_back({t.enemy_index, t.est_pos.x, t.est_pos.y});
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i]) f.assignments.emplace_back(i, *assignment[i]);
  }
  f.term = term;
  f.rt = rt;
  f.rn = rn;
  f.r_h = r_h;
  f.taken_over = taken_over;
  return f;
}

// --- session ---------------------------------------------------------------

Session::Session(SessionConfig cfg) : cfg_(std::move(cfg)), keeper_(cfg_.scenario.sensors, 0) {
  if (cfg_.outbox_capacity == 0) throw std::invalid_argument("Session: outbox_capacity must be > 0");
  if (!(cfg_.tick_rate > 0.0)) throw std::invalid_argument("Session: tick_rate must be > 0");
  if (!(cfg_.state_scale > 0.0)) throw std::invalid_argument("Session: state_scale must be > 0");
  if (!cfg_.actor) advisor_ = std::make_unique<hier::HeuristicAdvisor>(hier::HeuristicParams{cfg_.scenario.world.r_n});
  start(cfg_.scenario.kind);
}

void Session::start(harness::ScenarioKind kind, std::optional<std::uint64_t> seed) {
  if (kind == cfg_.scenario.kind) {
    spec_ = cfg_.scenario;
  } else {
    spec_ = harness::ScenarioSpec::make(kind);
    spec_.world = cfg_.scenario.world;
    spec_.sensors = cfg_.scenario.sensors;
    spec_.arena = cfg_.scenario.arena;
    spec_.ground_radars = cfg_.scenario.ground_radars;
    spec_.fire_range = cfg_.scenario.fire_range;
  }
  // Same stream layout as harness::policy_trial, so an unattended session
  // reproduces the batch trial with the same seed.
  const std::uint64_t trial_seed = seed.value_or(derive_seed(cfg_.seed, trials_));
  ++trials_;
  initial_ = harness::generate_scenario(spec_, derive_seed(trial_seed, 0));
  const std::uint64_t run_seed = derive_seed(trial_seed, 1);
  const std::uint64_t ctl_seed = derive_seed(run_seed, 8);
  world_rng_ = Rng(harness::world_stream(run_seed));
  sense_rng_ = Rng(derive_seed(ctl_seed, 0));
  control_rng_ = Rng(derive_seed(ctl_seed, 1));

  control_ = spec_.control();
  control_.state_scale = cfg_.state_scale;
  keeper_ = hier::TrackKeeper(spec_.sensors, control_.max_track_age);
  if (advisor_) advisor_->reset();
  world_ = initial_;
  term_ = initial_.absorbing ? sim::Termination::kRunning : sim::evaluate_termination(initial_, spec_.world);
  takeovers_.clear();
  paused_ = false;
  discount_ = 1.0;
  records_.clear();
  log_ = {};
  log_.record(initial_);
  result_ = {};
  result_.termination = term_;
}

void Session::post(OperatorMessage m) {
  std::lock_guard lock(in_mu_);
  inbox_.emplace_back(std::move(m));
}

bool Session::post_text(std::string_view text) {
  try {
    post(decode_operator(text));
    return true;
  } catch (const DecodeError& e) {
    push_out(encode_error(e.field(), e.what()));
    return false;
  }
}

void Session::disconnect() {
  std::lock_guard lock(in_mu_);
  inbox_.emplace_back(Disconnect{});
}

void Session::push_out(std::string msg) {
  std::lock_guard lock(out_mu_);
  if (outbox_.size() >= cfg_.outbox_capacity) {
    outbox_.pop_front();
    ++dropped_;
  }
  outbox_.push_back(std::move(msg));
}

std::optional<std::string> Session::pop_outbox() {
  std::lock_guard lock(out_mu_);
  if (outbox_.empty()) return std::nullopt;
  std::string m = std::move(outbox_.front());
  outbox_.pop_front();
  return m;
}

std::uint64_t Session::dropped() const {
  std::lock_guard lock(out_mu_);
  return dropped_;
}

void Session::apply(const OperatorMessage& m, double& reward) {
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Takeover>) {
          if (msg.drone_id >= world_.allies.size() || !world_.allies[msg.drone_id].functional) {
            push_out(encode_error("drone_id", "no functional ally " + std::to_string(msg.drone_id)));
            return;
          }
          takeovers_[msg.drone_id] = rl::DriveAction{msg.u_ma, msg.u_sr};
        } else if constexpr (std::is_same_v<T, Release>) {
          takeovers_.erase(msg.drone_id);
        } else if constexpr (std::is_same_v<T, Reward>) {
          reward = msg.value;
        } else if constexpr (std::is_same_v<T, StartTrial>) {
          start(msg.scenario, msg.seed);
          reward = 0.0;
        } else if constexpr (std::is_same_v<T, Pause>) {
          paused_ = true;
        } else {
          paused_ = false;
        }
      },
      m);
}

std::optional<Frame> Session::tick() {
  std::deque<Event> events;
  {
    std::lock_guard lock(in_mu_);
    events.swap(inbox_);
  }
  double reward = 0.0;
  for (const Event& ev : events) {
    if (std::holds_alternative<Disconnect>(ev)) takeovers_.clear();
    else apply(std::get<OperatorMessage>(ev), reward);
  }
  if (paused_ || term_ != sim::Termination::kRunning) return std::nullopt;

  std::erase_if(takeovers_, [&](const auto& kv) { return !world_.allies[kv.first].functional; });
  std::vector<std::size_t> controlled;
  for (const auto& [id, _] : takeovers_) controlled.push_back(id);

  keeper_.update(world_, sense_rng_);
  hier::ControlInputs in;
  in.actor = cfg_.actor.get();
  in.advisor = cfg_.actor ? nullptr : advisor_.get();
  in.takeovers = &takeovers_;
  in.collect = true;
  const hier::ControlOutput out = hier::control_step(world_, keeper_.tracks(), in, control_, control_rng_);
  sim::StepOutcome outcome = sim::step_world(world_, out.actions, out.radar_actions, spec_.world, world_rng_);

  TickRecord rec;
  rec.tick = static_cast<std::uint64_t>(outcome.next.t);
  rec.r_h = reward;
  rec.taken_over = controlled;
  // x_next uses the freshest estimates available before the next sweep.
  rec.transitions = hier::complete_transitions(out.pending, outcome, keeper_.tracks(), control_.state_scale, reward);
  records_.push_back(std::move(rec));

  result_.discounted_return += discount_ * (outcome.r_track + outcome.r_neut);
  discount_ *= spec_.world.gamma;
  ++result_.steps;
  result_.termination = outcome.termination;
  term_ = outcome.termination;
  world_ = std::move(outcome.next);
  log_.record(world_);
  if (term_ != sim::Termination::kRunning) {
    result_.enemies_neutralized = static_cast<int>(initial_.enemies.size() - sim::count_functional(world_.enemies));
    int lost = 0;
    for (std::size_t i = 0; i < world_.allies.size(); ++i) {
      if (initial_.allies[i].functional && !world_.allies[i].functional) ++lost;
    }
    result_.allies_lost = lost;
  }

  Frame f = make_frame(world_, keeper_.tracks(), out.assignment, outcome.r_track, outcome.r_neut, reward, term_,
                       controlled);
  f.trial = trials_;
  ++emitted_;
  push_out(encode_frame(f));
  return f;
}

}  // namespace hitl::bridge
