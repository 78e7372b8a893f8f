#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "absnav/geometry.hpp"
#include "absnav/world.hpp"

namespace absnav {

enum class GoalSource { None, Exploration, Model };
const char* to_string(GoalSource s);

/// Which rule produced an action.
enum class ActionSource { Planner, Sweep, Fallback, Stop };
const char* to_string(ActionSource s);

/// What the agent reports about its latest decision. Points are in the
/// episode frame (relative to the start pose).
struct DecisionInfo {
  GoalSource goal_source = GoalSource::None;
  ActionSource action_source = ActionSource::Planner;
  bool relocated = false;
  int matched_model = -1;
  std::optional<double> search_radius;
  std::optional<Vec2> goal_point;
  /// Index into the frame's detections of the one that confirmed a stop.
  int stop_detection = -1;
  /// Goal-class views in the reloaded model at relocation time; -1 before.
  int reloaded_goal_views = -1;
  std::vector<std::string> events;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin_episode(int goal_class, int max_steps) = 0;
  /// An action requested before the first frame. Anything but nullopt is an
  /// agent fault.
  virtual std::optional<Action> pre_sensing_action() { return std::nullopt; }
  virtual Action decide(const SensorFrame& frame) = 0;
  virtual DecisionInfo last_decision() const { return {}; }
  virtual void end_episode() {}
};

struct StepEvent {
  int step = 0;
  /// Scene frame, before the action.
  Pose pose{};
  Action action = Action::Stop;
  DecisionInfo info;
  /// Goal point in the scene frame.
  std::optional<Vec2> goal_point_scene;
  /// Ground truth of the stop-confirming detection, when there was one.
  bool trigger_phantom = false;
  int trigger_object = -1;
  int trigger_class = -1;
};

enum class FailureClass { LastMile, Hallucination, Detection, Exploration, Misc };
const char* to_string(FailureClass c);

struct EpisodeRecord {
  EpisodeSpec spec;
  bool success = false;
  bool stopped = false;
  bool agent_fault = false;
  int actions = 0;
  double path_length = 0.0;
  double shortest_path = 0.0;
  double d_init = 0.0;
  double d_T = 0.0;
  double final_distance = 0.0;
  bool relocated = false;
  Pose final_pose{};
  std::vector<StepEvent> trace;
  std::optional<FailureClass> failure_class;
};

struct RunConfig {
  WorldConfig world;
  SensorConfig sensor;
};

/// sense -> decide -> step until Stop or max_steps actions. Success needs Stop
/// within success_radius (Euclidean) of a goal_class centroid. Ground-truth
/// detection fields are cleared before the agent sees a frame.
EpisodeRecord run_episode(const Scene& scene, const EpisodeSpec& spec, Agent& agent, const RunConfig& cfg = {});

/// One JSON object per step.
void write_trace_jsonl(const EpisodeRecord& record, std::ostream& out);

}  // namespace absnav
