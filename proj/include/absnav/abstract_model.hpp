#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "absnav/geometry.hpp"
#include "absnav/occupancy.hpp"
#include "absnav/perception.hpp"
#include "absnav/world.hpp"

namespace absnav {

/// Finite state machine over abstract states, with the occupancy map built
/// alongside it in the same frame.
struct AbstractModel {
  int id = 0;
  std::vector<AbstractState> states;
  /// (state id, action) -> successor id. A partial function by construction.
  std::map<std::pair<int, Action>, int> transitions;
  OccupancyMap map{0.05};
  std::size_t transition_conflicts = 0;

  std::size_t object_view_count() const;
};

struct ModelStore {
  std::vector<AbstractModel> models;

  /// Appends `m` under a fresh id and returns that id.
  int add(AbstractModel m);
  AbstractModel* find(int model_id);
  const AbstractModel* find(int model_id) const;
  std::size_t state_count() const;
  bool empty() const { return models.empty(); }
};

struct MatchResult {
  int model_id = -1;
  int state_id = -1;
  double distance = 0.0;
  /// Takes the query anchor pose onto the matched state's anchor pose.
  FrameTransform transform;
};

/// Appends `from`'s views to `into`, skipping views that already exist at the
/// same class and position (within 1e-9 m).
void merge_object_views(AbstractState& into, const AbstractState& from);

/// Returns the id of an existing state within `dedup_threshold` cosine
/// distance (views unioned into it) or appends `s` under a fresh id.
int insert_state(AbstractModel& model, AbstractState s, double dedup_threshold = 0.05);

/// Latest-wins; a changed successor bumps model.transition_conflicts.
void record_transition(AbstractModel& model, int prev, Action a, int next);

/// Global argmin of cosine distance over every state of every model. Values
/// within 1e-12 of the threshold count as equal to it.
std::optional<MatchResult> best_match(const ModelStore& store, const AbstractState& s,
                                      double threshold = 0.3);

struct MergeResult {
  /// For each state of the merged-in model, its id in the target.
  std::vector<int> id_map;
  /// States of the merged-in model that landed on an already present state.
  int unified = 0;
};

/// Merges `current` into `target` through `m.transform`. The state
/// `query_state` of `current` (the matched one) is unified with m.state_id
/// regardless of the dedup threshold; every other state goes through
/// insert_state. Pass query_state = -1 to rely on dedup alone.
MergeResult merge_into(AbstractModel& target, const AbstractModel& current, const MatchResult& m,
                       int query_state, double dedup_threshold = 0.05);

/// merge_into against the store model named by m.model_id; returns it.
AbstractModel& merge_models(ModelStore& store, const AbstractModel& current, const MatchResult& m,
                            int query_state, double dedup_threshold = 0.05,
                            MergeResult* result = nullptr);

struct GoalCandidate {
  Vec2 centroid{};
  /// Number of distinct states contributing a view.
  int visibility = 0;
  std::size_t view_count = 0;
};

struct GoalQueryConfig {
  double cluster_radius = 0.5;
  std::size_t top_k = 5;
  /// Candidates seen from fewer states are ignored.
  int min_visibility = 1;
  /// Candidates whose centroid lies within cluster_radius of any of these
  /// points are ignored.
  std::vector<Vec2> excluded;
};

/// Single-link clusters of every view of `goal_class`, sorted by centroid.
std::vector<GoalCandidate> goal_candidates(const AbstractModel& model, int goal_class,
                                           double cluster_radius = 0.5);

/// Top-k candidates by visibility (ties toward the agent), then the closest.
std::optional<Vec2> query_goal(const AbstractModel& model, int goal_class, Vec2 agent_pos,
                               const GoalQueryConfig& cfg = {});

/// Same rule over a precomputed candidate list.
std::optional<GoalCandidate> select_goal(const std::vector<GoalCandidate>& candidates, Vec2 agent_pos,
                                         const GoalQueryConfig& cfg = {});

/// JSON model file plus an OCC map next to it (same stem, ".occ").
void save_model(const AbstractModel& model, const std::filesystem::path& path);
AbstractModel load_model(const std::filesystem::path& path);

void save_store(const ModelStore& store, const std::filesystem::path& dir);
ModelStore load_store(const std::filesystem::path& dir);

}  // namespace absnav
