#include "absnav/controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "absnav/errors.hpp"

namespace absnav {

const char* to_string(ControllerMode m) {
  switch (m) {
    case ControllerMode::MemoryLess: return "memory_less";
    case ControllerMode::HardReuse: return "hard_reuse";
    case ControllerMode::SoftReuse: return "soft_reuse";
  }
  return "?";
}

void validate_controller_config(const ControllerConfig& cfg) {
  if (!(cfg.match_threshold > 0.0 && cfg.match_threshold < 2.0))
    throw ConfigError("match_threshold must lie in (0, 2)");
  if (cfg.exploration_goal_period <= 0) throw ConfigError("exploration_goal_period must be positive");
  if (!(cfg.stop_radius > 0.0)) throw ConfigError("stop_radius must be positive");
  if (!(cfg.soft_kappa >= 0.0) || !(cfg.soft_min_radius > 0.0))
    throw ConfigError("soft search radius parameters must be positive");
  if (!(cfg.dedup_threshold >= 0.0) || !(cfg.cluster_radius > 0.0))
    throw ConfigError("dedup_threshold and cluster_radius must be non-negative");
  if (cfg.min_candidate_views < 1) throw ConfigError("min_candidate_views must be at least 1");
  if (cfg.top_k == 0) throw ConfigError("top_k must be positive");
  if (!(cfg.map_resolution > 0.0)) throw ConfigError("map resolution must be positive");
  if (cfg.sweep_turns < 0) throw ConfigError("sweep_turns must be non-negative");
}

AbstractModel NavigationController::empty_model() const {
  AbstractModel m;
  m.map = OccupancyMap(cfg_.map_resolution);
  return m;
}

NavigationController::NavigationController(ControllerConfig cfg, ModelStore* store)
    : cfg_(std::move(cfg)), store_(store), memory_(store), own_(empty_model()), grid_(cfg_.planner.inflation_radius) {
  validate_controller_config(cfg_);
}

NavigationController::NavigationController(ControllerConfig cfg, const ModelStore* frozen)
    : cfg_(std::move(cfg)), memory_(frozen), own_(empty_model()), grid_(cfg_.planner.inflation_radius) {
  validate_controller_config(cfg_);
  if (cfg_.incremental) throw ConfigError("incremental control needs a writable store");
}

void NavigationController::begin_episode(int goal_class, int /*max_steps*/) {
  goal_class_ = goal_class;
  step_ = 0;
  own_ = empty_model();
  working_ = empty_model();
  model_ = &own_;
  cs_ = ControllerState{};
  info_ = DecisionInfo{};
  prev_episode_pose_.reset();
  match_anchor_ = {};
  reloaded_goal_views_ = -1;
  rejected_.clear();
  sweeping_ = false;
  sweep_turns_done_ = 0;
  goal_failures_ = 0;
  explore_goal_.reset();
  explore_set_step_ = 0;
  explore_failed_ = false;
  explore_is_frontier_ = false;
  explore_visited_.clear();
  grid_.reset();
  reset_plan();
}

void NavigationController::end_episode() {
  if (cfg_.incremental && !cs_.relocated && store_ && cfg_.mode != ControllerMode::MemoryLess)
    store_->add(std::move(own_));
  grid_.reset();
  reset_plan();
}

AbstractModel NavigationController::take_model() {
  AbstractModel out = std::move(*model_);
  own_ = empty_model();
  model_ = &own_;
  grid_.reset();
  reset_plan();
  return out;
}

Action NavigationController::decide(const SensorFrame& frame) {
  info_ = DecisionInfo{};
  const Pose ep = frame.pose;
  if (cfg_.mark_collisions && cs_.last_action == Action::MoveForward && prev_episode_pose_ &&
      *prev_episode_pose_ == ep)
    mark_collision(cs_.to_model.apply(ep));
  prev_episode_pose_ = ep;

  Pose mp = cs_.to_model.apply(ep);
  AbstractState s = create_state(frame, mp, cfg_.features);
  integrate_scan(current().map, mp, frame.depth, cfg_.sensor);
  AbstractState query;
  query.features = s.features;
  query.anchor_pose = s.anchor_pose;
  const int sid = insert_state(current(), std::move(s), cfg_.dedup_threshold);
  if (cs_.prev_state_id && cs_.last_action && *cs_.last_action != Action::Stop)
    record_transition(current(), *cs_.prev_state_id, *cs_.last_action, sid);
  cs_.prev_state_id = sid;

  if (cfg_.mode != ControllerMode::MemoryLess && !cs_.relocated && memory_ && !memory_->empty()) {
    try_relocate(query, sid);
    mp = cs_.to_model.apply(ep);
  }

  const Action a = goal_class_ < 0 ? explore(mp) : reason(frame, mp);
  cs_.last_action = a;

  info_.goal_source = cs_.goal_source;
  info_.relocated = cs_.relocated;
  info_.matched_model = cs_.matched_model;
  info_.search_radius = cs_.goal_source == GoalSource::Model ? cs_.search_radius : std::nullopt;
  if (cs_.goal_point) info_.goal_point = cs_.to_model.inverse().apply(*cs_.goal_point);
  info_.reloaded_goal_views = reloaded_goal_views_;
  if (a == Action::Stop) info_.action_source = ActionSource::Stop;
  ++step_;
  return a;
}

void NavigationController::try_relocate(const AbstractState& query, int query_id) {
  const auto m = best_match(*memory_, query, cfg_.match_threshold);
  if (!m) return;
  const AbstractModel* target = memory_->find(m->model_id);
  reloaded_goal_views_ = 0;
  for (const auto& st : target->states)
    for (const auto& v : st.object_views)
      if (v.class_id == goal_class_) ++reloaded_goal_views_;
  match_anchor_ = target->states[static_cast<std::size_t>(m->state_id)].anchor_pose.position();

  MergeResult r;
  // Obstacles of the reloaded map were seen by earlier sessions only; this
  // episode's scans may clear them.
  if (cfg_.incremental && store_) {
    store_->find(m->model_id)->map.begin_session();
    model_ = &merge_models(*store_, own_, *m, query_id, cfg_.dedup_threshold, &r);
  } else {
    working_ = *target;
    working_.map.begin_session();
    r = merge_into(working_, own_, *m, query_id, cfg_.dedup_threshold);
    model_ = &working_;
  }
  own_ = empty_model();

  cs_.prev_state_id = r.id_map[static_cast<std::size_t>(query_id)];
  cs_.to_model = m->transform.compose(cs_.to_model);
  cs_.relocated = true;
  cs_.matched_model = m->model_id;
  auto move = [&](Vec2 p) { return m->transform.apply(p); };
  if (cs_.goal_point) cs_.goal_point = move(*cs_.goal_point);
  if (explore_goal_) explore_goal_ = move(*explore_goal_);
  for (Vec2& p : explore_visited_) p = move(p);
  for (Vec2& p : rejected_) p = move(p);
  // Goals are re-derived from the enlarged model on this very step.
  if (cs_.goal_source == GoalSource::Model) {
    cs_.goal_source = GoalSource::Exploration;
    cs_.goal_point = explore_goal_;
  }
  sweeping_ = false;
  grid_.reset();
  reset_plan();
  info_.events.push_back("relocated");
}

Action NavigationController::reason(const SensorFrame& frame, const Pose& mp) {
  const auto candidates = goal_candidates(current(), goal_class_, cfg_.cluster_radius);
  GoalQueryConfig q;
  q.cluster_radius = cfg_.cluster_radius;
  q.top_k = cfg_.top_k;
  q.min_visibility = cfg_.min_candidate_views;
  q.excluded = rejected_;
  const auto pick = select_goal(candidates, mp.position(), q);
  if (pick) {
    const bool new_goal = cs_.goal_source != GoalSource::Model || !cs_.goal_point ||
                          distance(*cs_.goal_point, pick->centroid) > cfg_.cluster_radius;
    if (new_goal) {
      sweeping_ = false;
      goal_failures_ = 0;
      cs_.search_radius = cs_.relocated
                              ? std::max(cfg_.soft_min_radius, cfg_.soft_kappa * distance(match_anchor_, pick->centroid))
                              : cfg_.soft_min_radius;
      info_.events.push_back("model_goal");
    }
    cs_.goal_source = GoalSource::Model;
    cs_.goal_point = pick->centroid;
  } else if (cs_.goal_source == GoalSource::Model) {
    cs_.goal_source = GoalSource::Exploration;
    cs_.goal_point.reset();
    cs_.search_radius.reset();
    sweeping_ = false;
  }

  if (cfg_.mode == ControllerMode::HardReuse) {
    if (cs_.goal_source == GoalSource::Model && distance(mp.position(), *cs_.goal_point) < cfg_.stop_radius)
      return Action::Stop;
  } else {
    for (std::size_t i = 0; i < frame.detections.size(); ++i) {
      const Detection& d = frame.detections[i];
      if (d.class_id != goal_class_ || !(d.centroid_range < cfg_.stop_radius)) continue;
      const Vec2 p = localize_object(d, mp);
      const bool confirmed = std::any_of(candidates.begin(), candidates.end(), [&](const GoalCandidate& c) {
        return c.visibility >= cfg_.min_candidate_views && distance(c.centroid, p) <= cfg_.cluster_radius;
      });
      if (confirmed) {
        info_.stop_detection = static_cast<int>(i);
        return Action::Stop;
      }
    }
    if (cs_.goal_source == GoalSource::Model) {
      const double d = distance(mp.position(), *cs_.goal_point);
      const double r = cs_.search_radius.value_or(cfg_.soft_min_radius);
      if (sweeping_ && d > r + cfg_.cluster_radius) sweeping_ = false;
      if (!sweeping_ && d <= r) {
        sweeping_ = true;
        sweep_centered_ = false;
        sweep_start_step_ = step_;
        sweep_turns_done_ = 0;
        info_.events.push_back("sweep_start");
      }
      if (sweeping_ && !sweep_centered_) {
        // Close in on the disc centre first, then look around from there.
        if (d <= kSweepCenterRadius || step_ - sweep_start_step_ >= kSweepApproachSteps)
          sweep_centered_ = true;
        else
          return plan_toward(*cs_.goal_point, mp);
      }
      if (sweeping_) {
        if (sweep_turns_done_ < cfg_.sweep_turns) {
          ++sweep_turns_done_;
          info_.action_source = ActionSource::Sweep;
          return Action::TurnLeft;
        }
        sweeping_ = false;
        rejected_.push_back(*cs_.goal_point);
        info_.events.push_back("sweep_exhausted");
        cs_.goal_source = GoalSource::Exploration;
        cs_.goal_point.reset();
        cs_.search_radius.reset();
        explore_failed_ = true;
      }
    }
  }
  if (cs_.goal_source == GoalSource::Model) return plan_toward(*cs_.goal_point, mp);
  return explore(mp);
}

bool NavigationController::near_frontier(Vec2 p) const {
  const OccupancyMap& map = model_->map;
  const CellIndex c = map.cell_of(p);
  constexpr int kR = 3;
  for (int dy = -kR; dy <= kR; ++dy)
    for (int dx = -kR; dx <= kR; ++dx) {
      const CellIndex q{c.x + dx, c.y + dy};
      if (map.at(q) != Cell::Free) continue;
      if (map.at({q.x + 1, q.y}) == Cell::Unknown || map.at({q.x - 1, q.y}) == Cell::Unknown ||
          map.at({q.x, q.y + 1}) == Cell::Unknown || map.at({q.x, q.y - 1}) == Cell::Unknown)
        return true;
    }
  return false;
}

Action NavigationController::explore(const Pose& mp) {
  grid_.sync(current().map);
  bool refresh = !explore_goal_ || explore_failed_ || step_ - explore_set_step_ >= cfg_.exploration_goal_period;
  if (explore_goal_ && distance(mp.position(), *explore_goal_) < cfg_.goal_reached_radius) {
    explore_visited_.push_back(*explore_goal_);
    refresh = true;
  } else if (explore_goal_ && explore_is_frontier_ && !near_frontier(*explore_goal_)) {
    refresh = true;
  }
  if (refresh) {
    explore_goal_ = exploration_goal(current().map, grid_.grid(), mp, cfg_.planner, explore_visited_);
    explore_set_step_ = step_;
    explore_failed_ = false;
    explore_is_frontier_ = near_frontier(*explore_goal_);
    info_.events.push_back("exploration_goal");
  }
  cs_.goal_source = GoalSource::Exploration;
  cs_.goal_point = explore_goal_;
  return plan_toward(*explore_goal_, mp);
}

bool NavigationController::plan_still_valid(Vec2 goal, const Pose& mp) {
  if (!plan_) return false;
  const OccupancyMap& map = current().map;
  if (distance(plan_->goal, goal) > cfg_.replan_goal_shift) return false;
  if (plan_->layout != map.layout_generation()) return false;
  if (!std::isfinite(plan_->field.at(map.cell_of(mp.position())))) return false;
  const auto& log = map.obstacle_log();
  const double reach = (cfg_.planner.inflation_radius + 2.0 * map.resolution()) / map.resolution();
  const double reach2 = reach * reach;
  for (std::size_t i = plan_->obstacles_seen; i < log.size(); ++i) {
    const CellIndex o = log[i];
    for (const CellIndex c : plan_->path) {
      const double dx = c.x - o.x;
      const double dy = c.y - o.y;
      if (dx * dx + dy * dy <= reach2) return false;
    }
  }
  plan_->obstacles_seen = log.size();
  return true;
}

void NavigationController::replan(Vec2 goal, const Pose& mp, const TraversabilityGrid& g) {
  const OccupancyMap& map = current().map;
  const auto snapped = snap_to_open(g, map.cell_of(goal), cfg_.planner.snap_radius);
  if (!snapped) throw GoalBlocked("no traversable cell near goal");
  const CellIndex agent = map.cell_of(mp.position());
  FmmOptions o;
  o.stop_at = agent;
  o.stop_slack = cfg_.replan_slack;
  o.escape_center = mp.position();
  o.escape_radius = cfg_.planner.inflation_radius;
  const CellIndex src[1] = {*snapped};
  Plan p;
  p.field = fmm_solve(g, src, o);
  if (!std::isfinite(p.field.at(agent))) throw GoalBlocked("goal unreachable from agent");
  p.goal = goal;
  p.layout = map.layout_generation();
  p.obstacles_seen = map.obstacle_log().size();
  p.path = descent_path(p.field, agent, 4000);
  plan_ = std::move(p);
}

Action NavigationController::plan_toward(Vec2 goal, const Pose& mp) {
  try {
    grid_.sync(current().map);
    if (!plan_still_valid(goal, mp)) replan(goal, mp, grid_.grid());
    try {
      const Action a = next_action(plan_->field, mp, cfg_.planner);
      goal_failures_ = 0;
      return a;
    } catch (const NoDescent&) {
      replan(goal, mp, grid_.grid());
      const Action a = next_action(plan_->field, mp, cfg_.planner);
      goal_failures_ = 0;
      return a;
    }
  } catch (const Error& e) {
    if (cs_.relocated && cs_.goal_source == GoalSource::Model) {
      // A reloaded map seen from a slightly wrong frame can wall off a goal.
      // Trust only what this episode has hit and let the scans sort it out.
      try {
        replan(goal, mp, build_session_traversability(current().map, cfg_.planner.inflation_radius));
        const Action a = next_action(plan_->field, mp, cfg_.planner);
        info_.events.push_back("live_plan");
        return a;
      } catch (const Error&) {
        reset_plan();
      }
    }
    info_.action_source = ActionSource::Fallback;
    info_.events.push_back(std::string("fallback: ") + e.what());
    reset_plan();
    if (cs_.goal_source == GoalSource::Model) {
      if (++goal_failures_ >= kMaxGoalFailures) {
        rejected_.push_back(goal);
        goal_failures_ = 0;
        info_.events.push_back("goal_rejected");
      }
    } else {
      explore_failed_ = true;
      explore_visited_.push_back(goal);
    }
    return Action::TurnLeft;
  }
}

void NavigationController::mark_collision(const Pose& mp) {
  OccupancyMap& map = current().map;
  const Vec2 dir{std::cos(mp.theta), std::sin(mp.theta)};
  const Vec2 perp{-dir.y, dir.x};
  const Vec2 ahead = mp.position() + dir * (cfg_.world.agent_radius + 0.1);
  for (int k = -1; k <= 1; ++k) map.observe_hit(map.cell_of(ahead + perp * (k * map.resolution())));
  reset_plan();
}

}  // namespace absnav
