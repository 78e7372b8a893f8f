#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "absnav/episode.hpp"
#include "absnav/errors.hpp"
#include "helpers.hpp"

using namespace absnav;
using namespace absnav::testing;

namespace {

class Scripted : public Agent {
 public:
  explicit Scripted(std::vector<Action> script, std::optional<Action> early = std::nullopt)
      : script_(std::move(script)), early_(early) {}
  void begin_episode(int, int) override {
    k_ = 0;
    frames.clear();
  }
  std::optional<Action> pre_sensing_action() override { return early_; }
  Action decide(const SensorFrame& f) override {
    frames.push_back(f);
    return k_ < script_.size() ? script_[k_++] : Action::TurnLeft;
  }
  std::vector<SensorFrame> frames;

 private:
  std::vector<Action> script_;
  std::optional<Action> early_;
  std::size_t k_ = 0;
};

/// Stops on the first goal-class detection and reports which one.
class StopOnSight : public Agent {
 public:
  void begin_episode(int goal, int) override { goal_ = goal; }
  Action decide(const SensorFrame& f) override {
    info_ = {};
    for (std::size_t i = 0; i < f.detections.size(); ++i)
      if (f.detections[i].class_id == goal_) {
        info_.stop_detection = static_cast<int>(i);
        return Action::Stop;
      }
    return Action::TurnLeft;
  }
  DecisionInfo last_decision() const override { return info_; }

 private:
  int goal_ = 0;
  DecisionInfo info_;
};

Scene goal_scene() {
  Scene s = open_scene(10, 10, 3);
  s.objects.push_back(object(0, 1, {5, 5}));
  return s;
}

EpisodeSpec spec_at(Pose p, int max_steps = 500) {
  EpisodeSpec e;
  e.scene_id = "test";
  e.start_pose = p;
  e.goal_class = 1;
  e.max_steps = max_steps;
  e.episode_id = 7;
  return e;
}

}  // namespace

TEST(Episode, ImmediateStopNearGoalSucceeds) {
  Scripted a({Action::Stop});
  const EpisodeRecord r = run_episode(goal_scene(), spec_at({5.5, 5, 0}), a);
  EXPECT_TRUE(r.stopped);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.actions, 0);
  EXPECT_EQ(r.path_length, 0.0);
  EXPECT_NEAR(r.final_distance, 0.5, 1e-12);
  ASSERT_EQ(r.trace.size(), 1u);
}

TEST(Episode, ImmediateStopFarFromGoalFails) {
  Scripted a({Action::Stop});
  const EpisodeRecord r = run_episode(goal_scene(), spec_at({8, 9, 0}), a);
  EXPECT_TRUE(r.stopped);
  EXPECT_FALSE(r.success);
  EXPECT_NEAR(r.final_distance, 5.0, 1e-12);
}

TEST(Episode, ForwardMovesAccumulatePath) {
  Scripted a({Action::MoveForward, Action::MoveForward, Action::MoveForward, Action::MoveForward, Action::Stop});
  const EpisodeRecord r = run_episode(goal_scene(), spec_at({1, 1, 0}), a);
  EXPECT_EQ(r.actions, 4);
  EXPECT_NEAR(r.path_length, 1.0, 1e-12);
  EXPECT_NEAR(r.final_pose.x, 2.0, 1e-12);
  // Turns cost no path.
  Scripted t({Action::TurnLeft, Action::TurnRight, Action::Stop});
  EXPECT_EQ(run_episode(goal_scene(), spec_at({1, 1, 0}), t).path_length, 0.0);
}

TEST(Episode, BlockedForwardCostsNoPath) {
  Scripted a({Action::MoveForward, Action::MoveForward, Action::Stop});
  const EpisodeRecord r = run_episode(goal_scene(), spec_at({9.8, 1, 0}), a);
  EXPECT_EQ(r.actions, 2);
  EXPECT_EQ(r.path_length, 0.0);
}

TEST(Episode, BudgetEndsWithoutStop) {
  Scripted a({});
  const EpisodeRecord r = run_episode(goal_scene(), spec_at({5.5, 5, 0}, 30), a);
  EXPECT_EQ(r.actions, 30);
  EXPECT_FALSE(r.stopped);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.trace.size(), 30u);
}

TEST(Episode, EarlyActionIsAgentFault) {
  Scripted a({Action::Stop}, Action::MoveForward);
  const EpisodeRecord r = run_episode(goal_scene(), spec_at({5.5, 5, 0}), a);
  EXPECT_TRUE(r.agent_fault);
  EXPECT_FALSE(r.success);
  EXPECT_TRUE(r.trace.empty());
  EXPECT_TRUE(a.frames.empty());
}

TEST(Episode, AgentSeesRelativePoseAndNoGroundTruth) {
  Scripted a({Action::MoveForward, Action::TurnLeft, Action::MoveForward, Action::Stop});
  SensorConfig noisy;
  noisy.p_fp = 0.5;
  RunConfig cfg;
  cfg.sensor = noisy;
  run_episode(goal_scene(), spec_at({3, 5, 0}), a, cfg);
  ASSERT_EQ(a.frames.size(), 4u);
  EXPECT_EQ(a.frames[0].pose, (Pose{0, 0, 0}));
  EXPECT_NEAR(a.frames[1].pose.x, 0.25, 1e-12);
  // One 30 degree turn, then a quarter meter.
  EXPECT_NEAR(a.frames[3].pose.x, 0.25 + 0.25 * std::cos(kPi / 6), 1e-12);
  EXPECT_NEAR(a.frames[3].pose.y, 0.125, 1e-12);
  for (const auto& f : a.frames)
    for (const auto& d : f.detections) {
      EXPECT_FALSE(d.is_phantom);
      EXPECT_EQ(d.object_id, -1);
    }
}

TEST(Episode, StopTriggerCarriesGroundTruth) {
  StopOnSight a;
  const EpisodeRecord r = run_episode(goal_scene(), spec_at({3.5, 5, 0}), a);
  ASSERT_TRUE(r.stopped);
  ASSERT_FALSE(r.trace.empty());
  const StepEvent& last = r.trace.back();
  EXPECT_EQ(last.trigger_class, 1);
  EXPECT_TRUE(last.trigger_phantom || last.trigger_object == 0);
}

TEST(Episode, RejectsBadSpecs) {
  Scripted a({Action::Stop});
  EXPECT_THROW(run_episode(goal_scene(), spec_at({0.05, 5, 0}), a), ConfigError);
  EpisodeSpec s = spec_at({5.5, 5, 0});
  s.goal_class = 6;
  EXPECT_THROW(run_episode(goal_scene(), s, a), ConfigError);
  s = spec_at({5.5, 5, 0}, 0);
  EXPECT_THROW(run_episode(goal_scene(), s, a), ConfigError);
}

TEST(Episode, TraceIsDeterministicJsonl) {
  auto once = [] {
    StopOnSight a;
    const EpisodeRecord r = run_episode(goal_scene(), spec_at({1, 1, 2.0}), a);
    std::ostringstream out;
    write_trace_jsonl(r, out);
    return out.str();
  };
  const std::string a = once();
  EXPECT_EQ(a, once());
  std::istringstream in(a);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<int>(), n);
    EXPECT_EQ(j.at("episode_id").get<int>(), 7);
    ++n;
  }
  EXPECT_GT(n, 0);
}
