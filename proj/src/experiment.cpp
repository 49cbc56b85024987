#include "hitl/experiment.hpp"

#include <charconv>
#include <chrono>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

namespace hitl::harness {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& where, const std::string& s) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError(where + ": bad number '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& where, const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError(where + ": bad boolean '" + s + "'");
}

std::string_view effector_name(hier::Effector e) {
  switch (e) {
    case hier::Effector::kEmp: return "emp";
    case hier::Effector::kJamIfRf: return "jam_if_rf";
    case hier::Effector::kGpsSpoof: return "gps_spoof";
  }
  return "?";
}

hier::Effector effector_from(const std::string& where, const std::string& s) {
  if (s == "emp") return hier::Effector::kEmp;
  if (s == "jam_if_rf") return hier::Effector::kJamIfRf;
  if (s == "gps_spoof") return hier::Effector::kGpsSpoof;
  throw ConfigError(where + ": unknown effector '" + s + "'");
}

std::string_view advisor_name(AdvisorKind k) {
  switch (k) {
    case AdvisorKind::kAuto: return "auto";
    case AdvisorKind::kHeuristic: return "heuristic";
    case AdvisorKind::kNone: return "none";
  }
  return "?";
}

// Table of (key, reference) pairs for plain numeric sections.
struct DoubleField {
  const char* key;
  double* value;
};

std::vector<DoubleField> world_fields(sim::WorldConfig& w) {
  return {{"p_ra_x", &w.p_ra.x},         {"p_ra_y", &w.p_ra.y},     {"r_ra", &w.r_ra},
          {"r_gc", &w.r_gc},             {"r_egcs", &w.r_egcs},     {"r_n", &w.r_n},
          {"v_max_sr", &w.v_max_sr},     {"v_max_as", &w.v_max_as}, {"v_max_eo", &w.v_max_eo},
          {"v_max_gr", &w.v_max_gr},     {"phi_max_eo", &w.phi_max_eo}, {"pr_empd", &w.pr_empd},
          {"gamma", &w.gamma}};
}

std::vector<DoubleField> sensor_fields(sensing::SensorConfig& s) {
  return {{"r_gr", &s.r_gr},     {"r_ad", &s.r_ad},     {"r_eo", &s.r_eo},   {"r_rf", &s.r_rf},
          {"r_eo_payload", &s.r_eo_payload}, {"rho_gr", &s.rho_gr}, {"rho_ad", &s.rho_ad},
          {"rho_eo", &s.rho_eo}, {"pr_gr", &s.pr_gr},   {"pr_dr", &s.pr_dr}, {"pr_eo", &s.pr_eo},
          {"pr_rf", &s.pr_rf},   {"d_de", &s.d_de},     {"d_ae", &s.d_ae}};
}

std::vector<DoubleField> scenario_fields(ScenarioSpec& s) {
  return {{"arena", &s.arena},
          {"ally_ring_min", &s.ally_ring_min},
          {"ally_ring_max", &s.ally_ring_max},
          {"enemy_gcs_prob", &s.enemy_gcs_prob},
          {"front_width", &s.front_width},
          {"front_min", &s.front_min},
          {"front_max", &s.front_max},
          {"decoy_spawn", &s.decoy_spawn},
          {"decoy_turn", &s.decoy_turn},
          {"decoy_spread", &s.decoy_spread},
          {"threat_spawn", &s.threat_spawn},
          {"threat_offset", &s.threat_offset},
          {"threat_jitter", &s.threat_jitter}};
}

bool set_double(std::vector<DoubleField> fields, const std::string& where, const std::string& key,
                const std::string& value) {
  for (const DoubleField& f : fields) {
    if (key == f.key) {
      *f.value = parse_number<double>(where, value);
      return true;
    }
  }
  return false;
}

std::string radars_text(const std::vector<Vec2>& radars) {
  std::string s;
  for (std::size_t i = 0; i < radars.size(); ++i) s += (i ? ";" : "") + fmt(radars[i].x) + "," + fmt(radars[i].y);
  return s;
}

std::vector<Vec2> parse_radars(const std::string& where, const std::string& text) {
  std::vector<Vec2> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw ConfigError(where + ": expected x,y pairs");
    out.push_back({parse_number<double>(where, item.substr(0, comma)), parse_number<double>(where, item.substr(comma + 1))});
  }
  return out;
}

void apply(ExperimentConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  const std::string where = "[" + section + "] " + key;
  if (section == "experiment") {
    if (key == "seed") c.seed = parse_number<std::uint64_t>(where, value);
    else if (key == "repetitions") c.repetitions = parse_number<int>(where, value);
    else if (key == "episodes") c.episodes = parse_number<int>(where, value);
    else if (key == "n_eval") c.n_eval = parse_number<int>(where, value);
    else if (key == "n_heldout") c.n_heldout = parse_number<int>(where, value);
    else if (key == "heldout") {
      if (value == "none") c.heldout.reset();
      else {
        try {
          c.heldout = scenario_kind_from_string(value);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(where + ": " + e.what());
        }
      }
    } else if (key == "evaluate") c.evaluate = parse_bool(where, value);
    else if (key == "workers") c.workers = parse_number<int>(where, value);
    else if (key == "advisor") {
      if (value == "auto") c.advisor = AdvisorKind::kAuto;
      else if (value == "heuristic") c.advisor = AdvisorKind::kHeuristic;
      else if (value == "none") c.advisor = AdvisorKind::kNone;
      else throw ConfigError(where + ": unknown advisor '" + value + "'");
    } else throw ConfigError("unknown key " + where);
  } else if (section == "trainer") {
    try {
      if (!rl::set_trainer_field(c.trainer, key, value)) throw ConfigError("unknown key " + where);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + e.what());
    }
  } else if (section == "world") {
    if (key == "timelimit") c.scenario.world.timelimit = parse_number<int>(where, value);
    else if (key == "enforce_ally_gcs_range") c.scenario.world.enforce_ally_gcs_range = parse_bool(where, value);
    else if (!set_double(world_fields(c.scenario.world), where, key, value)) throw ConfigError("unknown key " + where);
  } else if (section == "sensors") {
    if (!set_double(sensor_fields(c.scenario.sensors), where, key, value)) throw ConfigError("unknown key " + where);
  } else if (section == "scenario") {
    if (key == "kind") {
      // Handled before the other keys.
    } else if (key == "n_ad") c.scenario.n_ad = parse_number<int>(where, value);
    else if (key == "n_ed") c.scenario.n_ed = parse_number<int>(where, value);
    else if (key == "effector") c.scenario.effector = effector_from(where, value);
    else if (key == "fire_range") {
      if (value == "r_n") c.scenario.fire_range.reset();
      else c.scenario.fire_range = parse_number<double>(where, value);
    } else if (key == "ground_radars") c.scenario.ground_radars = parse_radars(where, value);
    else if (!set_double(scenario_fields(c.scenario), where, key, value)) throw ConfigError("unknown key " + where);
  } else if (section == "advisor") {
    if (key == "shaping") c.heuristic.shaping = parse_number<double>(where, value);
    else if (key == "r_n") c.heuristic.r_n = parse_number<double>(where, value);
    else throw ConfigError("unknown key " + where);
  } else {
    throw ConfigError("unknown section [" + section + "]");
  }
}

}  // namespace

bool ExperimentConfig::uses_advisor() const {
  switch (advisor) {
    case AdvisorKind::kAuto: return trainer.advice_prob > 0.0;
    case AdvisorKind::kHeuristic: return true;
    case AdvisorKind::kNone: return false;
  }
  return false;
}

ScenarioSpec ExperimentConfig::heldout_spec() const {
  if (!heldout) throw std::logic_error("no held-out scenario configured");
  ScenarioSpec s = ScenarioSpec::make(*heldout);
  s.world = scenario.world;
  s.sensors = scenario.sensors;
  s.arena = scenario.arena;
  s.ground_radars = scenario.ground_radars;
  s.ally_ring_min = scenario.ally_ring_min;
  s.ally_ring_max = scenario.ally_ring_max;
  s.fire_range = scenario.fire_range;
  return s;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (n_eval < 1 || n_heldout < 1) throw ConfigError("evaluation trial counts must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (scenario.kind == ScenarioKind::kCustom) throw ConfigError("experiments need a generated scenario kind");
  if (trainer.gamma != scenario.world.gamma) throw ConfigError("[trainer] gamma must equal [world] gamma");
  try {
    trainer.validate();
    scenario.validate();
    if (heldout) heldout_spec().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  // The scenario kind picks the layout defaults the other keys refine.
  if (auto sc = tree.get_child_optional("scenario")) {
    if (auto kind = sc->get_optional<std::string>("kind")) {
      try {
        c.scenario = ScenarioSpec::make(scenario_kind_from_string(*kind));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[scenario] kind: ") + e.what());
      }
    }
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [key, value] : body) apply(c, section, key, value.data());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string to_ini(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  std::ostringstream os;
  os << "[experiment]\n"
     << "seed=" << c.seed << "\nrepetitions=" << c.repetitions << "\nepisodes=" << c.episodes
     << "\nn_eval=" << c.n_eval << "\nn_heldout=" << c.n_heldout
     << "\nheldout=" << (c.heldout ? std::string(to_string(*c.heldout)) : "none")
     << "\nevaluate=" << (c.evaluate ? 1 : 0) << "\nworkers=" << c.workers
     << "\nadvisor=" << advisor_name(c.advisor) << "\n\n";
  os << "[trainer]\n" << rl::to_text(c.trainer) << '\n';
  os << "[world]\n";
  for (const DoubleField& f : world_fields(c.scenario.world)) os << f.key << '=' << fmt(*f.value) << '\n';
  os << "timelimit=" << c.scenario.world.timelimit
     << "\nenforce_ally_gcs_range=" << (c.scenario.world.enforce_ally_gcs_range ? 1 : 0) << "\n\n";
  os << "[sensors]\n";
  for (const DoubleField& f : sensor_fields(c.scenario.sensors)) os << f.key << '=' << fmt(*f.value) << '\n';
  os << "\n[scenario]\n"
     << "kind=" << to_string(c.scenario.kind) << "\nn_ad=" << c.scenario.n_ad << "\nn_ed=" << c.scenario.n_ed
     << "\neffector=" << effector_name(c.scenario.effector)
     << "\nfire_range=" << (c.scenario.fire_range ? fmt(*c.scenario.fire_range) : "r_n")
     << "\nground_radars=" << radars_text(c.scenario.ground_radars) << '\n';
  for (const DoubleField& f : scenario_fields(c.scenario)) os << f.key << '=' << fmt(*f.value) << '\n';
  os << "\n[advisor]\nshaping=" << fmt(c.heuristic.shaping) << "\nr_n=" << fmt(c.heuristic.r_n) << '\n';
  return os.str();
}

std::uint64_t repetition_seed(std::uint64_t master, int rep) {
  return derive_seed(master, 100 + static_cast<std::uint64_t>(rep));
}
std::uint64_t eval_seed(std::uint64_t master) { return derive_seed(master, 1); }
std::uint64_t heldout_seed(std::uint64_t master) { return derive_seed(master, 2); }

std::string checkpoint_name(int episode) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%05d.bin", episode);
  return buf;
}

void write_metrics_header(std::ostream& os) {
  os << "episode,steps,return,termination,epsilon,human_sample_fraction,critic_loss,actor_loss\n";
}

void write_metrics_row(const rl::MetricsRow& m, std::ostream& os) {
  os << m.episode << ',' << m.steps << ',' << fmt(m.ret) << ',' << sim::to_string(m.termination) << ','
     << fmt(m.epsilon) << ',' << fmt(m.human_sample_fraction) << ',' << fmt(m.critic_loss) << ','
     << fmt(m.actor_loss) << '\n';
}

std::string arm_name(double advice_prob) {
  if (advice_prob <= 0.0) return "AI";
  return "HITL(" + fmt(advice_prob) + ")";
}

namespace {

using nlohmann::json;

json manifest(const ExperimentConfig& cfg, const ExperimentResult& r) {
  json reps = json::array();
  for (const RepetitionOutcome& rep : r.reps) {
    json ckpts = json::array();
    for (int ep : rep.checkpoint_episodes) ckpts.push_back("rep" + std::to_string(rep.rep) + "/" + checkpoint_name(ep));
    reps.push_back({{"rep", rep.rep},
                    {"seed", rep.seed},
                    {"episodes_completed", rep.episodes_completed},
                    {"metrics", "rep" + std::to_string(rep.rep) + "/metrics.csv"},
                    {"checkpoints", ckpts},
                    {"human_transitions", rep.human_transitions},
                    {"ai_transitions", rep.ai_transitions}});
  }
  json m{{"format", "hitl-experiment"},
         {"version", 1},
         {"complete", r.complete},
         {"master_seed", cfg.seed},
         {"arm", arm_name(cfg.trainer.advice_prob)},
         {"advice_prob", cfg.trainer.advice_prob},
         {"scenario", std::string(to_string(cfg.scenario.kind))},
         {"repetitions", cfg.repetitions},
         {"episodes", cfg.episodes},
         {"advisor", cfg.uses_advisor() ? "heuristic" : "none"},
         {"eval_seed", eval_seed(cfg.seed)},
         {"n_eval", cfg.n_eval},
         {"reps", reps}};
  if (cfg.heldout) {
    m["heldout"] = std::string(to_string(*cfg.heldout));
    m["heldout_seed"] = heldout_seed(cfg.seed);
    m["n_heldout"] = cfg.n_heldout;
  }
  json evals = json::array();
  if (r.train_eval) evals.push_back("eval_" + r.train_eval->scenario + ".csv");
  if (r.heldout_eval) evals.push_back("heldout_" + r.heldout_eval->scenario + ".csv");
  m["eval_reports"] = evals;
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_manifest(const ExperimentConfig& cfg, const ExperimentResult& r, const std::filesystem::path& out) {
  write_text(out / "manifest.json", manifest(cfg, r).dump(2) + "\n");
}

void run_repetition(const ExperimentConfig& cfg, const std::filesystem::path& out, RepetitionOutcome& rep,
                    const ExperimentOptions& options, std::mutex& log_mu) {
  namespace fs = std::filesystem;
  const fs::path dir = out / ("rep" + std::to_string(rep.rep));
  fs::create_directories(dir);
  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  write_metrics_header(metrics);

  const ScenarioSpec& spec = cfg.scenario;
  rl::EnvFactory env{[&spec](int, Rng& rng) { return generate_scenario(spec, rng); }, spec.world, spec.sensors,
                     spec.control()};
  std::unique_ptr<hier::HeuristicAdvisor> advisor;
  if (cfg.uses_advisor()) advisor = std::make_unique<hier::HeuristicAdvisor>(cfg.heuristic);

  rl::TrainHooks hooks;
  hooks.on_episode = [&](const rl::MetricsRow& row) {
    write_metrics_row(row, metrics);
    metrics.flush();
    rep.episodes_completed = row.episode + 1;
    if (options.log && (row.episode + 1) % 10 == 0) {
      std::lock_guard lock(log_mu);
      *options.log << "rep " << rep.rep << " episode " << row.episode + 1 << "/" << cfg.episodes << " "
                   << sim::to_string(row.termination) << '\n';
    }
  };
  hooks.on_checkpoint = [&](const rl::Snapshot& snap) {
    rl::save_checkpoint(snap.actor, snap.critic, cfg.trainer, dir / checkpoint_name(snap.episode));
    rep.checkpoint_episodes.push_back(snap.episode);
    rep.actors.push_back(std::make_shared<const rl::Net>(snap.actor));
  };
  if (options.stop) hooks.stop = [&options] { return options.stop->load(); };

  rl::TrainResult tr = rl::train(env, advisor.get(), cfg.trainer, cfg.episodes, rep.seed, hooks);
  rep.human_transitions = tr.human_transitions;
  rep.ai_transitions = tr.ai_transitions;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                const ExperimentOptions& options) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out);
  write_text(out / "config.ini", to_ini(cfg));

  ExperimentResult result;
  result.reps.resize(static_cast<std::size_t>(cfg.repetitions));
  for (int r = 0; r < cfg.repetitions; ++r) {
    result.reps[static_cast<std::size_t>(r)].rep = r;
    result.reps[static_cast<std::size_t>(r)].seed = repetition_seed(cfg.seed, r);
  }
  write_manifest(cfg, result, out);

  std::mutex log_mu;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(result.reps.size());
  {
    const int n_threads = std::min(cfg.workers, cfg.repetitions);
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_threads; ++w) {
      pool.emplace_back([&] {
        for (int r = next++; r < cfg.repetitions; r = next++) {
          try {
            run_repetition(cfg, out, result.reps[static_cast<std::size_t>(r)], options, log_mu);
          } catch (...) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
          }
        }
      });
    }
  }
  for (const std::exception_ptr& e : errors) {
    if (e) {
      write_manifest(cfg, result, out);
      std::rethrow_exception(e);
    }
  }

  const bool stopped = options.stop && options.stop->load();
  result.complete = !stopped;
  for (const RepetitionOutcome& rep : result.reps) {
    if (rep.episodes_completed != cfg.episodes) result.complete = false;
  }

  if (result.complete && cfg.evaluate && cfg.episodes > 0) {
    std::vector<std::vector<std::shared_ptr<const rl::Net>>> actors;
    for (const RepetitionOutcome& rep : result.reps) actors.push_back(rep.actors);
    const std::vector<int>& episodes = result.reps.front().checkpoint_episodes;
    const std::string arm = arm_name(cfg.trainer.advice_prob);
    const double scale = cfg.trainer.state_scale;

    EvalReport train_eval = evaluate(actors, episodes, cfg.scenario, cfg.n_eval, eval_seed(cfg.seed), cfg.workers, scale);
    train_eval.arm = arm;
    std::ofstream ev(out / ("eval_" + train_eval.scenario + ".csv"), std::ios::binary);
    write_eval_csv(train_eval, ev);
    result.train_eval = std::move(train_eval);

    if (cfg.heldout) {
      EvalReport held = evaluate(actors, episodes, cfg.heldout_spec(), cfg.n_heldout, heldout_seed(cfg.seed),
                                 cfg.workers, scale);
      held.arm = arm;
      std::ofstream hv(out / ("heldout_" + held.scenario + ".csv"), std::ios::binary);
      write_eval_csv(held, hv);
      result.heldout_eval = std::move(held);
    }
  }
  write_manifest(cfg, result, out);

  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(out / "wall_time.txt", "wall_time_seconds=" + fmt(result.wall_time) + "\n");
  return result;
}

}  // namespace hitl::harness
