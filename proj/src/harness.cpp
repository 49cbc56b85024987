#include "hitl/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace hitl::harness {

using nlohmann::json;

StackController::StackController(const ScenarioSpec& spec, std::shared_ptr<const rl::Net> actor,
                                 std::shared_ptr<hier::Advisor> advisor, Operator* op, double state_scale)
    : control_(spec.control()),
      actor_(std::move(actor)),
      advisor_(std::move(advisor)),
      op_(op),
      keeper_(spec.sensors, control_.max_track_age) {
  if (!actor_ && !advisor_) throw std::invalid_argument("StackController: need an actor or an advisor");
  if (!(state_scale > 0.0)) throw std::invalid_argument("StackController: state_scale must be positive");
  control_.state_scale = state_scale;
}

void StackController::reset(const sim::WorldState&, std::uint64_t seed) {
  keeper_.reset();
  sense_rng_ = Rng(derive_seed(seed, 0));
  control_rng_ = Rng(derive_seed(seed, 1));
  manual_.reset();
  if (advisor_) advisor_->reset();
  if (op_) op_->reset();
}

Command StackController::decide(const sim::WorldState& world) {
  keeper_.update(world, sense_rng_);
  std::map<std::size_t, rl::DriveAction> takeovers;
  if (manual_) {
    takeovers = std::move(*manual_);
    manual_.reset();
  } else if (op_) {
    takeovers = op_->takeovers(world);
  }
  hier::ControlInputs in;
  in.actor = actor_.get();
  in.advisor = advisor_.get();
  in.takeovers = &takeovers;
  last_ = hier::control_step(world, keeper_.tracks(), in, control_, control_rng_);
  return Command{last_.actions, last_.radar_actions};
}

Command IdleController::decide(const sim::WorldState& world) {
  return Command{std::vector<sim::AllyAction>(world.allies.size()), std::vector<double>(world.radars.size(), 0.0)};
}

std::map<std::size_t, rl::DriveAction> RescueOperator::takeovers(const sim::WorldState& truth) {
  std::map<std::size_t, rl::DriveAction> out;
  for (const sim::EnemyDrone& e : truth.enemies) {
    if (!e.functional || is_decoy(e)) continue;
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < truth.allies.size(); ++i) {
      const sim::AllyDrone& a = truth.allies[i];
      if (!a.functional || out.contains(i)) continue;
      const double d = distance(a.p, e.p);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (!best) continue;
    const Vec2 d = e.p - truth.allies[*best].p;
    out[*best] = rl::DriveAction{d.bearing(), d.norm() > 5.0 ? 1.0 : 0.0};
  }
  return out;
}

// --- trials ----------------------------------------------------------------

void TrajectoryLog::record(const sim::WorldState& w) {
  auto row = [&](const char* kind, std::size_t id, Vec2 p, double phi, bool f) {
    std::ostringstream os;
    os.precision(10);
    os << w.t << ',' << kind << ',' << id << ',' << p.x << ',' << p.y << ',' << phi << ',' << (f ? 1 : 0);
    rows.push_back(os.str());
  };
  for (std::size_t i = 0; i < w.allies.size(); ++i) row("ally", i, w.allies[i].p, w.allies[i].phi, w.allies[i].functional);
  for (std::size_t j = 0; j < w.enemies.size(); ++j) row("enemy", j, w.enemies[j].p, 0.0, w.enemies[j].functional);
  for (std::size_t k = 0; k < w.radars.size(); ++k) row("radar", k, w.radars[k].p, w.radars[k].phi, true);
}

void TrajectoryLog::write_csv(std::ostream& os) const {
  os << "tick,kind,id,x,y,phi,functional\n";
  for (const std::string& r : rows) os << r << '\n';
}

std::uint64_t world_stream(std::uint64_t trial_seed) { return derive_seed(trial_seed, 7); }

namespace {

struct Runner {
  sim::WorldState state;
  const sim::WorldConfig& cfg;
  Rng world_rng;
  TrialResult result;
  double discount = 1.0;
  TrajectoryLog* log;
  TrialRecord* record;

  void step(const Command& cmd) {
    if (record) record->commands.push_back(cmd);
    sim::StepOutcome out = sim::step_world(state, cmd.allies, cmd.radars, cfg, world_rng);
    result.discounted_return += discount * (out.r_track + out.r_neut);
    discount *= cfg.gamma;
    ++result.steps;
    result.termination = out.termination;
    state = std::move(out.next);
    if (log) log->record(state);
  }

  void finish(const sim::WorldState& initial) {
    const auto alive_e = sim::count_functional(state.enemies);
    result.enemies_neutralized = static_cast<int>(initial.enemies.size() - alive_e);
    int lost = 0;
    for (std::size_t i = 0; i < state.allies.size(); ++i) {
      if (initial.allies[i].functional && !state.allies[i].functional) ++lost;
    }
    result.allies_lost = lost;
    if (record) record->result = result;
  }
};

}  // namespace

TrialResult run_trial(const sim::WorldState& initial, Controller& controller, const sim::WorldConfig& cfg,
                      std::uint64_t seed, TrajectoryLog* log, TrialRecord* record) {
  cfg.validate();
  if (record) {
    record->seed = seed;
    record->world = cfg;
    record->initial = initial;
    record->commands.clear();
  }
  Runner run{initial, cfg, Rng(world_stream(seed)), {}, 1.0, log, record};
  if (log) log->record(initial);
  controller.reset(initial, derive_seed(seed, 8));
  auto* stack = dynamic_cast<StackController*>(&controller);
  run.result.termination = initial.absorbing ? sim::Termination::kRunning : sim::evaluate_termination(initial, cfg);
  while (run.result.termination == sim::Termination::kRunning) {
    run.step(controller.decide(run.state));
    if (stack) {
      const std::size_t dim = stack->last_output().state_dim;
      if (run.result.steps == 1) run.result.state_dim = dim;
      else if (dim != run.result.state_dim) run.result.state_dim_constant = false;
    }
  }
  run.finish(initial);
  return run.result;
}

TrialResult replay(const TrialRecord& record, TrajectoryLog* log) {
  Runner run{record.initial, record.world, Rng(world_stream(record.seed)), {}, 1.0, log, nullptr};
  if (log) log->record(record.initial);
  run.result.termination =
      record.initial.absorbing ? sim::Termination::kRunning : sim::evaluate_termination(record.initial, record.world);
  for (const Command& cmd : record.commands) {
    if (run.result.termination != sim::Termination::kRunning) {
      throw std::runtime_error("replay: record has commands past termination");
    }
    run.step(cmd);
  }
  run.finish(record.initial);
  return run.result;
}

// --- record serialization ----------------------------------------------------

namespace {

json to_json(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json to_json(const sim::WorldConfig& c) {
  return {{"p_ra", to_json(c.p_ra)}, {"r_ra", c.r_ra},         {"r_gc", c.r_gc},
          {"r_egcs", c.r_egcs},      {"r_n", c.r_n},           {"v_max_sr", c.v_max_sr},
          {"v_max_as", c.v_max_as},  {"v_max_eo", c.v_max_eo}, {"v_max_gr", c.v_max_gr},
          {"phi_max_eo", c.phi_max_eo}, {"pr_empd", c.pr_empd}, {"gamma", c.gamma},
          {"timelimit", c.timelimit}, {"enforce_ally_gcs_range", c.enforce_ally_gcs_range}};
}

sim::WorldConfig world_config_from(const json& j) {
  sim::WorldConfig c;
  c.p_ra = vec_from(j.at("p_ra"));
  j.at("r_ra").get_to(c.r_ra);
  j.at("r_gc").get_to(c.r_gc);
  j.at("r_egcs").get_to(c.r_egcs);
  j.at("r_n").get_to(c.r_n);
  j.at("v_max_sr").get_to(c.v_max_sr);
  j.at("v_max_as").get_to(c.v_max_as);
  j.at("v_max_eo").get_to(c.v_max_eo);
  j.at("v_max_gr").get_to(c.v_max_gr);
  j.at("phi_max_eo").get_to(c.phi_max_eo);
  j.at("pr_empd").get_to(c.pr_empd);
  j.at("gamma").get_to(c.gamma);
  j.at("timelimit").get_to(c.timelimit);
  j.at("enforce_ally_gcs_range").get_to(c.enforce_ally_gcs_range);
  return c;
}

json to_json(const sim::WorldState& w) {
  json allies = json::array(), enemies = json::array(), radars = json::array();
  for (const auto& a : w.allies) {
    allies.push_back({{"p", to_json(a.p)}, {"phi", a.phi}, {"phi_eo", a.phi_eo}, {"functional", a.functional},
                      {"gcs_controlled", a.gcs_controlled}, {"p_gc", to_json(a.p_gc)},
                      {"radar_enabled", a.radar_enabled}, {"emp_used", a.emp_used}});
  }
  for (const auto& e : w.enemies) {
    json route = json::array();
    for (Vec2 p : e.route) route.push_back(to_json(p));
    enemies.push_back({{"p", to_json(e.p)}, {"payload", e.payload}, {"gcs_controlled", e.gcs_controlled},
                       {"p_egcs", to_json(e.p_egcs)}, {"functional", e.functional}, {"route", route},
                       {"route_index", e.route_index}});
  }
  for (const auto& r : w.radars) radars.push_back({{"p", to_json(r.p)}, {"phi", r.phi}});
  return {{"allies", allies}, {"enemies", enemies}, {"radars", radars}, {"t", w.t}, {"absorbing", w.absorbing}};
}

sim::WorldState world_state_from(const json& j) {
  sim::WorldState w;
  for (const json& a : j.at("allies")) {
    sim::AllyDrone d;
    d.p = vec_from(a.at("p"));
    a.at("phi").get_to(d.phi);
    a.at("phi_eo").get_to(d.phi_eo);
    a.at("functional").get_to(d.functional);
    a.at("gcs_controlled").get_to(d.gcs_controlled);
    d.p_gc = vec_from(a.at("p_gc"));
    a.at("radar_enabled").get_to(d.radar_enabled);
    a.at("emp_used").get_to(d.emp_used);
    w.allies.push_back(d);
  }
  for (const json& e : j.at("enemies")) {
    sim::EnemyDrone d;
    d.p = vec_from(e.at("p"));
    e.at("payload").get_to(d.payload);
    e.at("gcs_controlled").get_to(d.gcs_controlled);
    d.p_egcs = vec_from(e.at("p_egcs"));
    e.at("functional").get_to(d.functional);
    for (const json& p : e.at("route")) d.route.push_back(vec_from(p));
    e.at("route_index").get_to(d.route_index);
    w.enemies.push_back(d);
  }
  for (const json& r : j.at("radars")) w.radars.push_back(sim::GroundRadar{vec_from(r.at("p")), r.at("phi").get<double>()});
  j.at("t").get_to(w.t);
  j.at("absorbing").get_to(w.absorbing);
  return w;
}

json to_json(const sim::AllyAction& a) {
  return json::array({a.u_ma, a.u_sr, a.u_heading, a.u_eo, a.u_er, a.u_emp, a.u_ej, a.u_gpss, a.u_eh});
}

sim::AllyAction action_from(const json& j) {
  sim::AllyAction a;
  a.u_ma = j.at(0).get<double>();
  a.u_sr = j.at(1).get<double>();
  a.u_heading = j.at(2).get<double>();
  a.u_eo = j.at(3).get<double>();
  a.u_er = j.at(4).get<bool>();
  a.u_emp = j.at(5).get<bool>();
  a.u_ej = j.at(6).get<bool>();
  a.u_gpss = j.at(7).get<bool>();
  a.u_eh = j.at(8).get<bool>();
  return a;
}

}  // namespace

void save_record(const TrialRecord& record, const std::filesystem::path& path) {
  json commands = json::array();
  for (const Command& c : record.commands) {
    json allies = json::array();
    for (const auto& a : c.allies) allies.push_back(to_json(a));
    commands.push_back({{"allies", allies}, {"radars", c.radars}});
  }
  const json j = {{"format", "hitl-trial"},
                  {"version", 1},
                  {"seed", record.seed},
                  {"world", to_json(record.world)},
                  {"initial", to_json(record.initial)},
                  {"commands", commands},
                  {"result",
                   {{"termination", std::string(sim::to_string(record.result.termination))},
                    {"steps", record.result.steps},
                    {"discounted_return", record.result.discounted_return}}}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump() << '\n';
}

TrialRecord load_record(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  const json j = json::parse(is);
  if (j.value("format", "") != "hitl-trial") throw std::runtime_error(path.string() + ": not a trial record");
  TrialRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.world = world_config_from(j.at("world"));
  r.initial = world_state_from(j.at("initial"));
  for (const json& c : j.at("commands")) {
    Command cmd;
    for (const json& a : c.at("allies")) cmd.allies.push_back(action_from(a));
    cmd.radars = c.at("radars").get<std::vector<double>>();
    r.commands.push_back(std::move(cmd));
  }
  const json& res = j.at("result");
  r.result.termination = sim::termination_from_string(res.at("termination").get<std::string>());
  r.result.steps = res.at("steps").get<int>();
  r.result.discounted_return = res.at("discounted_return").get<double>();
  return r;
}

// --- evaluation ----------------------------------------------------------------

std::vector<TrialResult> run_trials(const std::function<TrialResult(std::uint64_t)>& trial, int n,
                                    std::uint64_t seed, int workers) {
  if (n < 0) throw std::invalid_argument("run_trials: negative count");
  std::vector<TrialResult> out(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = trial(derive_seed(seed, static_cast<std::uint64_t>(i)));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(workers, n));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double success_rate(const std::vector<TrialResult>& results) {
  if (results.empty()) return 0.0;
  int ok = 0;
  for (const TrialResult& r : results) ok += r.success() ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

TrialResult policy_trial(const ScenarioSpec& spec, std::shared_ptr<const rl::Net> actor, std::uint64_t trial_seed,
                         Operator* op, double state_scale) {
  const sim::WorldState initial = generate_scenario(spec, derive_seed(trial_seed, 0));
  StackController ctl(spec, std::move(actor), nullptr, op, state_scale);
  return run_trial(initial, ctl, spec.world, derive_seed(trial_seed, 1));
}

EvalReport aggregate(const std::vector<std::vector<double>>& rates, const std::vector<int>& episodes) {
  EvalReport rep;
  for (std::size_t c = 0; c < episodes.size(); ++c) {
    EvalCell cell;
    cell.episode = episodes[c];
    for (const auto& per_rep : rates) cell.per_rep.push_back(per_rep.at(c));
    const double n = static_cast<double>(cell.per_rep.size());
    double sum = 0.0;
    for (double v : cell.per_rep) sum += v;
    cell.mean = n > 0 ? sum / n : 0.0;
    double ss = 0.0;
    for (double v : cell.per_rep) ss += (v - cell.mean) * (v - cell.mean);
    cell.std = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    rep.cells.push_back(std::move(cell));
  }
  return rep;
}

EvalReport evaluate(const std::vector<std::vector<std::shared_ptr<const rl::Net>>>& actors,
                    const std::vector<int>& episodes, const ScenarioSpec& spec, int n_eval, std::uint64_t seed,
                    int workers, double state_scale) {
  std::vector<std::vector<double>> rates;
  for (const auto& series : actors) {
    if (series.size() != episodes.size()) throw std::invalid_argument("evaluate: checkpoint count mismatch");
    std::vector<double> row;
    for (const auto& actor : series) {
      auto trial = [&](std::uint64_t s) { return policy_trial(spec, actor, s, nullptr, state_scale); };
      row.push_back(success_rate(run_trials(trial, n_eval, seed, workers)));
    }
    rates.push_back(std::move(row));
  }
  EvalReport rep = aggregate(rates, episodes);
  rep.scenario = std::string(to_string(spec.kind));
  return rep;
}

void write_eval_csv(const EvalReport& report, std::ostream& os) {
  os << "arm,scenario,episode,mean,std";
  const std::size_t reps = report.cells.empty() ? 0 : report.cells.front().per_rep.size();
  for (std::size_t r = 0; r < reps; ++r) os << ",rep" << r;
  os << '\n';
  for (const EvalCell& c : report.cells) {
    os << report.arm << ',' << report.scenario << ',' << c.episode << ',' << c.mean << ',' << c.std;
    for (double v : c.per_rep) os << ',' << v;
    os << '\n';
  }
}

}  // namespace hitl::harness
