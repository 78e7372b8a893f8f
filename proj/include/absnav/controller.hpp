#pragma once

#include <optional>
#include <vector>

#include "absnav/abstract_model.hpp"
#include "absnav/episode.hpp"
#include "absnav/perception.hpp"
#include "absnav/planning.hpp"
#include "absnav/world.hpp"

namespace absnav {

enum class ControllerMode { MemoryLess, HardReuse, SoftReuse };
const char* to_string(ControllerMode m);

struct ControllerConfig {
  ControllerMode mode = ControllerMode::MemoryLess;
  /// Store the episode's model after the episode when it did not relocate.
  bool incremental = false;
  double match_threshold = 0.3;
  int exploration_goal_period = 25;
  double soft_kappa = 0.1;
  double soft_min_radius = 0.5;
  double stop_radius = 0.8;
  double dedup_threshold = 0.05;
  double cluster_radius = 0.5;
  std::size_t top_k = 5;
  /// Goal candidates seen from fewer distinct states are not acted upon, and
  /// a live detection only confirms a stop when its candidate reaches this.
  int min_candidate_views = 3;
  /// Turns of the in-place sweep at the centre of the soft search disc.
  int sweep_turns = 12;
  /// Exploration goal counts as reached inside this radius.
  double goal_reached_radius = 0.5;
  /// A goal that moved less than this keeps the cached distance field.
  double replan_goal_shift = 0.15;
  /// Distance-field early termination: cost beyond the agent's cell.
  double replan_slack = 1.5;
  /// Write an obstacle ahead of the agent after a blocked forward move.
  bool mark_collisions = true;
  double map_resolution = 0.05;
  FeatureConfig features;
  SensorConfig sensor;
  WorldConfig world;
  PlannerConfig planner;
};

/// Throws ConfigError on out-of-range values.
void validate_controller_config(const ControllerConfig& cfg);

struct ControllerState {
  std::optional<int> prev_state_id;
  std::optional<Action> last_action;
  bool relocated = false;
  int matched_model = -1;
  /// Episode frame -> model frame.
  FrameTransform to_model;
  /// Model frame.
  std::optional<Vec2> goal_point;
  GoalSource goal_source = GoalSource::None;
  std::optional<double> search_radius;
};

/// The per-step cycle: state creation and mapping, model update, one-shot
/// relocation against the store, goal reasoning, stop rule, planning.
class NavigationController : public Agent {
 public:
  /// `store` may be null (MemoryLess). Incremental mode writes to it.
  NavigationController(ControllerConfig cfg, ModelStore* store);
  /// Read-only memory for the non-incremental modes; safe to share across
  /// threads. Throws ConfigError when cfg.incremental is set.
  NavigationController(ControllerConfig cfg, const ModelStore* frozen);
  NavigationController(const NavigationController&) = delete;
  NavigationController& operator=(const NavigationController&) = delete;

  void begin_episode(int goal_class, int max_steps) override;
  Action decide(const SensorFrame& frame) override;
  DecisionInfo last_decision() const override { return info_; }
  void end_episode() override;

  const ControllerState& state() const { return cs_; }
  const AbstractModel& model() const { return *model_; }
  /// Moves the episode's own model out (pre-exploration uses this).
  AbstractModel take_model();
  const ControllerConfig& config() const { return cfg_; }

 private:
  AbstractModel& current() { return *model_; }
  AbstractModel empty_model() const;
  void try_relocate(const AbstractState& query, int query_id);
  Action reason(const SensorFrame& frame, const Pose& mp);
  Action explore(const Pose& mp);
  Action plan_toward(Vec2 goal, const Pose& mp);
  bool plan_still_valid(Vec2 goal, const Pose& mp);
  void replan(Vec2 goal, const Pose& mp, const TraversabilityGrid& g);
  bool near_frontier(Vec2 p) const;
  void mark_collision(const Pose& mp);
  void reset_plan() { plan_.reset(); }

  ControllerConfig cfg_;
  ModelStore* store_ = nullptr;
  const ModelStore* memory_ = nullptr;
  int goal_class_ = -1;
  int step_ = 0;

  AbstractModel own_;
  AbstractModel working_;
  AbstractModel* model_ = &own_;
  ControllerState cs_;
  DecisionInfo info_;
  std::optional<Pose> prev_episode_pose_;
  Vec2 match_anchor_{};
  int reloaded_goal_views_ = -1;

  // Goal reasoning.
  std::vector<Vec2> rejected_;
  bool sweeping_ = false;
  bool sweep_centered_ = false;
  int sweep_start_step_ = 0;
  int sweep_turns_done_ = 0;
  static constexpr double kSweepCenterRadius = 0.3;
  static constexpr int kSweepApproachSteps = 40;
  static constexpr int kMaxGoalFailures = 3;
  int goal_failures_ = 0;

  // Exploration.
  std::optional<Vec2> explore_goal_;
  int explore_set_step_ = 0;
  bool explore_failed_ = false;
  bool explore_is_frontier_ = false;
  std::vector<Vec2> explore_visited_;

  // Planning cache.
  PlanningGrid grid_;
  struct Plan {
    DistanceField field;
    Vec2 goal;
    std::uint64_t layout = 0;
    std::size_t obstacles_seen = 0;
    std::vector<CellIndex> path;
  };
  std::optional<Plan> plan_;
};

}  // namespace absnav
