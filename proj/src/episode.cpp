#include "absnav/episode.hpp"

#include <ostream>

#include <json.hpp>

#include "absnav/errors.hpp"

namespace absnav {

const char* to_string(GoalSource s) {
  switch (s) {
    case GoalSource::None: return "none";
    case GoalSource::Exploration: return "exploration";
    case GoalSource::Model: return "model";
  }
  return "?";
}

const char* to_string(ActionSource s) {
  switch (s) {
    case ActionSource::Planner: return "planner";
    case ActionSource::Sweep: return "sweep";
    case ActionSource::Fallback: return "fallback";
    case ActionSource::Stop: return "stop";
  }
  return "?";
}

const char* to_string(FailureClass c) {
  switch (c) {
    case FailureClass::LastMile: return "last_mile";
    case FailureClass::Hallucination: return "hallucination";
    case FailureClass::Detection: return "detection";
    case FailureClass::Exploration: return "exploration";
    case FailureClass::Misc: return "misc";
  }
  return "?";
}

namespace {

Vec2 to_scene(const Pose& start, Vec2 p) { return start.position() + rotate(p, start.theta); }

}  // namespace

EpisodeRecord run_episode(const Scene& scene, const EpisodeSpec& spec, Agent& agent, const RunConfig& cfg) {
  validate_episode(scene, spec, cfg.world);
  EpisodeRecord rec;
  rec.spec = spec;
  agent.begin_episode(spec.goal_class, spec.max_steps);

  Pose pose = spec.start_pose;
  if (agent.pre_sensing_action()) {
    rec.agent_fault = true;
  } else {
    for (int t = 0;; ++t) {
      SensorFrame truth = sense(scene, pose, spec.start_pose, spec.episode_id, t, cfg.sensor);
      SensorFrame visible = truth;
      for (Detection& d : visible.detections) {
        d.is_phantom = false;
        d.object_id = -1;
      }
      const Action a = agent.decide(visible);

      StepEvent ev;
      ev.step = t;
      ev.pose = pose;
      ev.action = a;
      ev.info = agent.last_decision();
      if (ev.info.goal_point) ev.goal_point_scene = to_scene(spec.start_pose, *ev.info.goal_point);
      if (ev.info.relocated) rec.relocated = true;
      const int idx = ev.info.stop_detection;
      if (a == Action::Stop && idx >= 0 && idx < static_cast<int>(truth.detections.size())) {
        const Detection& d = truth.detections[static_cast<std::size_t>(idx)];
        ev.trigger_phantom = d.is_phantom;
        ev.trigger_object = d.object_id;
        ev.trigger_class = d.class_id;
      }
      rec.trace.push_back(std::move(ev));

      if (a == Action::Stop) {
        rec.stopped = true;
        break;
      }
      const Pose next = step(scene, pose, a, cfg.world);
      rec.path_length += distance(pose.position(), next.position());
      pose = next;
      if (++rec.actions >= spec.max_steps) break;
    }
  }
  agent.end_episode();

  rec.final_pose = pose;
  rec.final_distance = scene.distance_to_class(pose.position(), spec.goal_class);
  rec.success = rec.stopped && !rec.agent_fault && rec.final_distance < spec.success_radius;
  return rec;
}

void write_trace_jsonl(const EpisodeRecord& record, std::ostream& out) {
  using nlohmann::json;
  for (const StepEvent& ev : record.trace) {
    json j;
    j["episode_id"] = record.spec.episode_id;
    j["step"] = ev.step;
    j["pose"] = {ev.pose.x, ev.pose.y, ev.pose.theta};
    j["action"] = to_string(ev.action);
    j["action_source"] = to_string(ev.info.action_source);
    j["goal_source"] = to_string(ev.info.goal_source);
    j["relocated"] = ev.info.relocated;
    j["matched_model"] = ev.info.matched_model;
    j["search_radius"] = ev.info.search_radius ? json(*ev.info.search_radius) : json(nullptr);
    j["goal_point"] = ev.goal_point_scene ? json{ev.goal_point_scene->x, ev.goal_point_scene->y} : json(nullptr);
    if (!ev.info.events.empty()) j["events"] = ev.info.events;
    if (ev.action == Action::Stop && ev.info.stop_detection >= 0)
      j["trigger"] = {{"class_id", ev.trigger_class}, {"object_id", ev.trigger_object}, {"phantom", ev.trigger_phantom}};
    out << j.dump() << '\n';
  }
}

}  // namespace absnav
