#include "hitl/hierarchy.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

namespace hitl::hier {

ControlConfig ControlConfig::from(const sim::WorldConfig& world) {
  ControlConfig c;
  c.fire_range = world.r_n;
  c.v_max_sr = world.v_max_sr;
  c.v_max_as = world.v_max_as;
  c.v_max_eo = world.v_max_eo;
  return c;
}

Assignment assign_closest(const std::vector<TrackEstimate>& tracks, const std::vector<sim::AllyDrone>& allies) {
  Assignment out(allies.size());
  for (std::size_t i = 0; i < allies.size(); ++i) {
    if (!allies[i].functional) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const TrackEstimate& tr : tracks) {
      const double d = distance(tr.est_pos, allies[i].p);
      const bool closer = d < best;
      const bool tie_lower = d == best && out[i] && tr.enemy_index < *out[i];
      if (closer || tie_lower) {
        best = d;
        out[i] = tr.enemy_index;
      }
    }
  }
  return out;
}

rl::StateVec drone_state(const sim::AllyDrone& ally, const TrackEstimate& track, double scale) {
  const Vec2 d = (track.est_pos - ally.p) / scale;
  return {d.x, d.y};
}

namespace {

std::size_t winning_index(std::span<const ControlProposal> proposals) {
  if (proposals.empty()) throw std::invalid_argument("arbitrate: no proposals");
  std::set<int> ranks;
  std::size_t best = 0;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const int rank = static_cast<int>(proposals[i].source_priority);
    if (!ranks.insert(rank).second) throw std::invalid_argument("arbitrate: duplicate priority rank");
    if (rank < static_cast<int>(proposals[best].source_priority)) best = i;
  }
  return best;
}

const TrackEstimate* find_track(const std::vector<TrackEstimate>& tracks, std::optional<std::size_t> enemy) {
  if (!enemy) return nullptr;
  for (const TrackEstimate& tr : tracks) {
    if (tr.enemy_index == *enemy) return &tr;
  }
  return nullptr;
}

}  // namespace

sim::AllyAction arbitrate(std::span<const ControlProposal> proposals) {
  return proposals[winning_index(proposals)].action;
}

AdvisorOutput heuristic_advisor(const sim::AllyDrone& ally, const TrackEstimate& track,
                                const HeuristicParams& params, std::optional<double> previous_distance) {
  const Vec2 d = track.est_pos - ally.p;
  const double range = d.norm();
  AdvisorOutput out;
  out.action = rl::DriveAction{range > 0.0 ? d.bearing() : 0.0, range > params.r_n / 2.0 ? 1.0 : 0.0};
  if (previous_distance) out.reward_bonus = params.shaping * (*previous_distance - range);
  return out;
}

AdvisorOutput policy_advisor(const rl::Checkpoint& checkpoint, const sim::AllyDrone& ally,
                             const TrackEstimate& track) {
  AdvisorOutput out;
  out.action = rl::greedy_action(checkpoint.actor, drone_state(ally, track, checkpoint.config.state_scale));
  return out;
}

AdvisorOutput HeuristicAdvisor::advise(std::size_t ally_index, const sim::AllyDrone& ally,
                                       const TrackEstimate& track) {
  std::optional<double> prev;
  if (auto it = last_.find(ally_index); it != last_.end() && it->second.enemy == track.enemy_index) {
    prev = it->second.distance;
  }
  AdvisorOutput out = heuristic_advisor(ally, track, params_, prev);
  last_[ally_index] = Last{track.enemy_index, distance(track.est_pos, ally.p)};
  return out;
}

PolicyAdvisor PolicyAdvisor::load(const std::filesystem::path& path) {
  return PolicyAdvisor(rl::load_checkpoint(path));
}

AdvisorOutput PolicyAdvisor::advise(std::size_t, const sim::AllyDrone& ally, const TrackEstimate& track) {
  return policy_advisor(checkpoint_, ally, track);
}

std::vector<TrackEstimate> refresh_tracks(const sim::WorldState& world,
                                          const std::vector<sensing::Detection>& detections,
                                          const std::vector<TrackEstimate>& previous, int max_age) {
  std::vector<TrackEstimate> fused = sensing::fuse(detections, previous);
  std::erase_if(fused, [&](const TrackEstimate& tr) {
    return tr.enemy_index >= world.enemies.size() || !world.enemies[tr.enemy_index].functional ||
           tr.age > max_age;
  });
  return fused;
}

const std::vector<TrackEstimate>& TrackKeeper::update(const sim::WorldState& world, Rng& rng) {
  tracks_ = refresh_tracks(world, sensing::observe(world, sensors_, rng), tracks_, max_age_);
  return tracks_;
}

sim::AllyAction compose_action(const rl::DriveAction& drive, const sim::AllyDrone& ally,
                               const TrackEstimate* track, const ControlConfig& cfg) {
  sim::AllyAction a;
  a.u_ma = std::clamp(drive.u_ma, -kPi, kPi);
  a.u_sr = std::clamp(drive.u_sr, 0.0, 1.0);
  a.u_er = true;
  if (!track) {
    // Nothing to chase: hold position and spin to scan with the drone radar.
    a.u_heading = 1.0;
    return a;
  }
  const Vec2 d = track->est_pos - ally.p;
  const double bearing = d.bearing();
  auto ratio = [](double angle, double vmax) { return vmax > 0.0 ? std::clamp(angle / vmax, -1.0, 1.0) : 0.0; };
  // Face the direction of travel so the drone radar looks ahead; when
  // holding, face the target.
  const double facing = a.u_sr > 0.0 ? a.u_ma : bearing;
  a.u_heading = ratio(wrap_angle(facing - ally.phi), cfg.v_max_as);
  a.u_eo = ratio(wrap_angle(bearing - ally.phi) - ally.phi_eo, cfg.v_max_eo);
  if (d.norm() <= cfg.fire_range) {
    switch (cfg.effector) {
      case Effector::kEmp: a.u_emp = true; break;
      case Effector::kJamIfRf:
        if (track->rf_seen) a.u_ej = true;
        else a.u_emp = true;
        break;
      case Effector::kGpsSpoof: a.u_gpss = true; break;
    }
  }
  return a;
}

ControlOutput control_step(const sim::WorldState& world, const std::vector<TrackEstimate>& tracks,
                           const ControlInputs& in, const ControlConfig& cfg, Rng& rng) {
  if (!in.actor && !in.advisor) throw std::invalid_argument("control_step: need an actor or an advisor");
  if (!in.actor && in.explore_k) throw std::invalid_argument("control_step: exploration needs an actor");
  if (in.explore_k && !in.trainer) throw std::invalid_argument("control_step: exploration needs a trainer config");

  ControlOutput out;
  out.actions.resize(world.allies.size());
  out.radar_actions.assign(world.radars.size(), cfg.radar_sweep);
  out.assignment = assign_closest(tracks, world.allies);

  for (std::size_t i = 0; i < world.allies.size(); ++i) {
    const sim::AllyDrone& ally = world.allies[i];
    if (!ally.functional) continue;
    const TrackEstimate* track = find_track(tracks, out.assignment[i]);

    std::vector<ControlProposal> proposals;
    rl::StateVec x{};
    double r_h = 0.0;
    if (track) {
      x = drone_state(ally, *track, cfg.state_scale);
      std::optional<rl::DriveAction> expert;
      if (in.advisor) {
        AdvisorOutput adv = in.advisor->advise(i, ally, *track);
        expert = adv.action;
        r_h = adv.reward_bonus;
      }
      rl::ActionChoice choice;
      if (!in.actor) {
        // Advisor-only control.
        choice = {expert.value_or(rl::DriveAction{}), rl::Source::kHuman};
      } else if (in.explore_k) {
        choice = rl::select_action(*in.actor, x, *in.explore_k, *in.trainer, expert, rng);
      } else {
        choice = {rl::greedy_action(*in.actor, x), rl::Source::kAi};
      }
      const Priority rank = choice.source == rl::Source::kHuman ? Priority::kAdvisor : Priority::kPolicy;
      proposals.push_back({rank, compose_action(choice.action, ally, track, cfg)});
    } else {
      proposals.push_back({Priority::kPolicy, compose_action({}, ally, nullptr, cfg)});
    }
    if (in.takeovers) {
      if (auto it = in.takeovers->find(i); it != in.takeovers->end()) {
        proposals.push_back({Priority::kHuman, compose_action(it->second, ally, track, cfg)});
      }
    }
    if (cfg.geofence) {
      const sim::AllyAction& current = proposals[winning_index(proposals)].action;
      const Vec2 next = ally.p + Vec2{std::cos(current.u_ma), std::sin(current.u_ma)} * (cfg.v_max_sr * current.u_sr);
      const bool outside = next.x < cfg.arena_min || next.x > cfg.arena_max || next.y < cfg.arena_min ||
                           next.y > cfg.arena_max;
      if (outside) {
        sim::AllyAction veto = current;
        veto.u_sr = 0.0;
        proposals.push_back({Priority::kSupervisor, veto});
      }
    }

    const std::size_t win = winning_index(proposals);
    out.actions[i] = proposals[win].action;
    if (in.collect && track) {
      const bool human = proposals[win].source_priority != Priority::kPolicy;
      out.pending.push_back(PendingTransition{
          i, track->enemy_index, x, rl::DriveAction{out.actions[i].u_ma, out.actions[i].u_sr},
          human ? rl::Source::kHuman : rl::Source::kAi, r_h, track->est_pos});
    }
  }
  return out;
}

std::vector<rl::Transition> complete_transitions(const std::vector<PendingTransition>& pending,
                                                 const sim::StepOutcome& outcome,
                                                 const std::vector<TrackEstimate>& next_tracks,
                                                 double state_scale, double extra_r_h) {
  std::vector<rl::Transition> out;
  out.reserve(pending.size());
  const std::size_t n_allies = outcome.next.allies.size();
  const double share = n_allies > 0 ? outcome.r_track / static_cast<double>(n_allies) : 0.0;
  for (const PendingTransition& p : pending) {
    rl::Transition tr;
    tr.x = p.x;
    tr.u = p.u;
    tr.r = share + outcome.r_neut_by_ally.at(p.ally);
    tr.r_h = p.r_h + extra_r_h;
    tr.source = p.source;
    const sim::AllyDrone& ally = outcome.next.allies.at(p.ally);
    const bool enemy_up = outcome.next.enemies.at(p.enemy).functional;
    tr.done = outcome.termination != sim::Termination::kRunning || !ally.functional || !enemy_up;
    const TrackEstimate* next = find_track(next_tracks, p.enemy);
    const Vec2 target = next ? next->est_pos : p.track_pos;
    const Vec2 d = (target - ally.p) / state_scale;
    tr.x_next = {d.x, d.y};
    out.push_back(tr);
  }
  return out;
}

}  // namespace hitl::hier
