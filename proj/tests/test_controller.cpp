#include <gtest/gtest.h>

#include <algorithm>

#include "absnav/controller.hpp"
#include "absnav/errors.hpp"
#include "helpers.hpp"

using namespace absnav;
using namespace absnav::testing;

namespace {

constexpr std::uint64_t kLatent = 4242;
constexpr int kGoal = 2;

SensorFrame frame_at(Pose episode_pose, Pose view_pose, std::uint64_t key, std::vector<Detection> dets = {}) {
  SensorFrame f;
  f.depth.assign(static_cast<std::size_t>(SensorConfig{}.num_rays), 5.0);
  f.pose = episode_pose;
  f.view = {kLatent, view_pose, key};
  f.detections = std::move(dets);
  return f;
}

AbstractState stored_state(Pose view_pose, std::uint64_t key, Pose anchor, std::vector<Vec2> goal_views = {}) {
  AbstractState s;
  s.features = synthesize_features(kLatent, view_pose, key);
  s.anchor_pose = anchor;
  for (Vec2 p : goal_views) {
    ObjectView v;
    v.class_id = kGoal;
    v.map_position = p;
    v.distance = 2.0;
    s.object_views.push_back(v);
    s.classes.insert(kGoal);
  }
  return s;
}

/// One stored model whose state 0 is the view at the origin; three other
/// states (far away in appearance) all saw a goal object at `goal`.
ModelStore one_model_store(Vec2 goal) {
  AbstractModel m;
  insert_state(m, stored_state({0, 0, 0}, 1, {0, 0, 0}));
  for (int k = 0; k < 3; ++k) insert_state(m, stored_state({10.0 + 5 * k, 10, 0}, 2, {10, 10, 0}, {goal}));
  // Open floor around the origin so plans exist.
  for (int y = -60; y <= 200; ++y)
    for (int x = -60; x <= 200; ++x) m.map.raise({x, y}, Cell::Free);
  ModelStore store;
  store.add(std::move(m));
  return store;
}

ControllerConfig config(ControllerMode mode, bool incremental = false) {
  ControllerConfig c;
  c.mode = mode;
  c.incremental = incremental;
  return c;
}

Detection goal_detection(double range, double bearing) {
  Detection d;
  d.class_id = kGoal;
  d.centroid_range = range;
  d.centroid_bearing = bearing;
  d.bbox = {bearing - 0.1, bearing + 0.1, range - 0.2, range + 0.2};
  return d;
}

}  // namespace

TEST(Controller, SearchRadiusFromMatchDistance) {
  const ModelStore store = one_model_store({8, 0});
  NavigationController c(config(ControllerMode::SoftReuse), &store);
  c.begin_episode(kGoal, 500);
  c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99));
  ASSERT_TRUE(c.state().relocated);
  EXPECT_EQ(c.state().goal_source, GoalSource::Model);
  ASSERT_TRUE(c.state().search_radius);
  EXPECT_NEAR(*c.state().search_radius, 0.8, 1e-9);
  ASSERT_TRUE(c.last_decision().goal_point);
  EXPECT_NEAR(c.last_decision().goal_point->x, 8.0, 1e-6);
}

TEST(Controller, SearchRadiusHasFloor) {
  const ModelStore store = one_model_store({2, 0});
  NavigationController c(config(ControllerMode::SoftReuse), &store);
  c.begin_episode(kGoal, 500);
  c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99));
  ASSERT_TRUE(c.state().search_radius);
  EXPECT_DOUBLE_EQ(*c.state().search_radius, 0.5);
}

TEST(Controller, RelocationComposesFrames) {
  // The stored frame saw the origin view from (2, 3) facing +y.
  ModelStore store;
  AbstractModel m;
  insert_state(m, stored_state({0, 0, 0}, 1, {2, 3, kPi / 2}));
  store.add(std::move(m));
  NavigationController c(config(ControllerMode::SoftReuse), &store);
  c.begin_episode(kGoal, 500);
  c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99));
  ASSERT_TRUE(c.state().relocated);
  const Pose mp = c.state().to_model.apply(Pose{1, 0, 0});
  EXPECT_NEAR(mp.x, 2, 1e-9);
  EXPECT_NEAR(mp.y, 4, 1e-9);
  EXPECT_NEAR(mp.theta, kPi / 2, 1e-9);
  // The query state was unified with the match, not appended.
  EXPECT_EQ(c.model().states.size(), 1u);
}

TEST(Controller, MemoryLessNeverRelocates) {
  const ModelStore store = one_model_store({8, 0});
  NavigationController c(config(ControllerMode::MemoryLess), &store);
  c.begin_episode(kGoal, 500);
  for (int t = 0; t < 5; ++t) {
    c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99 + t));
    EXPECT_FALSE(c.state().relocated);
    EXPECT_NE(c.state().goal_source, GoalSource::Model);
  }
}

TEST(Controller, RelocatesAtMostOnce) {
  ModelStore store = one_model_store({8, 0});
  {
    AbstractModel other;
    insert_state(other, stored_state({30, 30, 1.0}, 5, {0, 0, 0}));
    store.add(std::move(other));
  }
  NavigationController c(config(ControllerMode::SoftReuse), &store);
  c.begin_episode(kGoal, 500);
  int relocations = 0;
  const Pose views[3] = {{0, 0, 0}, {30, 30, 1.0}, {0, 0, 0}};
  for (const Pose& v : views) {
    c.decide(frame_at({0, 0, 0}, v, 7));
    const auto& ev = c.last_decision().events;
    relocations += static_cast<int>(std::count(ev.begin(), ev.end(), std::string("relocated")));
    EXPECT_EQ(c.state().matched_model, 0);
  }
  EXPECT_EQ(relocations, 1);
}

TEST(Controller, NoMatchAboveThreshold) {
  const ModelStore store = one_model_store({8, 0});
  NavigationController c(config(ControllerMode::SoftReuse), &store);
  c.begin_episode(kGoal, 500);
  SensorFrame f = frame_at({0, 0, 0}, {0, 0, 0}, 1);
  f.view.scene_latent = kLatent + 1;
  c.decide(f);
  EXPECT_FALSE(c.state().relocated);
}

TEST(Controller, HardReuseStopsNearModelGoal) {
  const ModelStore store = one_model_store({0.6, 0});
  NavigationController c(config(ControllerMode::HardReuse), &store);
  c.begin_episode(kGoal, 500);
  EXPECT_EQ(c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99)), Action::Stop);
}

TEST(Controller, SoftReuseNeedsConfirmingDetection) {
  const ModelStore store = one_model_store({0.6, 0});
  {
    NavigationController c(config(ControllerMode::SoftReuse), &store);
    c.begin_episode(kGoal, 500);
    EXPECT_NE(c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99)), Action::Stop);
  }
  {
    NavigationController c(config(ControllerMode::SoftReuse), &store);
    c.begin_episode(kGoal, 500);
    EXPECT_EQ(c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99, {goal_detection(0.6, 0.0)})), Action::Stop);
    EXPECT_EQ(c.last_decision().stop_detection, 0);
  }
  {
    // A detection where the model has nothing is not trusted.
    NavigationController c(config(ControllerMode::SoftReuse), &store);
    c.begin_episode(kGoal, 500);
    EXPECT_NE(c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99, {goal_detection(0.6, 1.2)})), Action::Stop);
  }
}

TEST(Controller, LoneDetectionWithoutMemoryDoesNotStop) {
  NavigationController c(config(ControllerMode::MemoryLess), static_cast<const ModelStore*>(nullptr));
  c.begin_episode(kGoal, 500);
  EXPECT_NE(c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 1, {goal_detection(0.6, 0.0)})), Action::Stop);
}

TEST(Controller, IncrementalStoresOnlyUnrelocatedEpisodes) {
  ModelStore store;
  NavigationController c(config(ControllerMode::SoftReuse, true), &store);
  c.begin_episode(kGoal, 500);
  c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 1));
  c.decide(frame_at({0, 0, 0}, {0, 0, deg_to_rad(30)}, 2));
  c.end_episode();
  ASSERT_EQ(store.models.size(), 1u);
  const std::size_t n = store.models[0].states.size();
  EXPECT_GE(n, 1u);

  c.begin_episode(kGoal, 500);
  c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 3));
  EXPECT_TRUE(c.state().relocated);
  c.decide(frame_at({0, 0, 0}, {3, 0, 0}, 4));
  c.end_episode();
  ASSERT_EQ(store.models.size(), 1u);
  EXPECT_GT(store.models[0].states.size(), n);
}

TEST(Controller, FrozenStoreIsNotWritten) {
  const ModelStore store = one_model_store({8, 0});
  const std::size_t n = store.models[0].states.size();
  NavigationController c(config(ControllerMode::SoftReuse), &store);
  c.begin_episode(kGoal, 500);
  c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99));
  c.decide(frame_at({0, 0, 0}, {4, 4, 0}, 98));
  c.end_episode();
  EXPECT_EQ(store.models.size(), 1u);
  EXPECT_EQ(store.models[0].states.size(), n);
}

TEST(Controller, ConfigValidation) {
  ControllerConfig bad = config(ControllerMode::SoftReuse, true);
  const ModelStore frozen;
  EXPECT_THROW(NavigationController(bad, &frozen), ConfigError);
  ControllerConfig t = config(ControllerMode::SoftReuse);
  t.match_threshold = 0.0;
  EXPECT_THROW(validate_controller_config(t), ConfigError);
  t = config(ControllerMode::SoftReuse);
  t.stop_radius = -1;
  EXPECT_THROW(validate_controller_config(t), ConfigError);
  t = config(ControllerMode::SoftReuse);
  t.min_candidate_views = 0;
  EXPECT_THROW(validate_controller_config(t), ConfigError);
  EXPECT_NO_THROW(validate_controller_config(config(ControllerMode::HardReuse)));
}

TEST(Controller, EpisodeResetsState) {
  const ModelStore store = one_model_store({8, 0});
  NavigationController c(config(ControllerMode::SoftReuse), &store);
  c.begin_episode(kGoal, 500);
  c.decide(frame_at({0, 0, 0}, {0, 0, 0}, 99));
  ASSERT_TRUE(c.state().relocated);
  c.end_episode();
  c.begin_episode(kGoal, 500);
  EXPECT_FALSE(c.state().relocated);
  EXPECT_TRUE(c.model().states.empty());
}

// Stored obstacles that this session's rays pass through from three poses
// come back as free; ones this session hit do not.
TEST(SessionClearing, StaleObstaclesClearAfterThreePasses) {
  OccupancyMap m(0.05);
  m.raise({0, 0}, Cell::Free);
  m.raise({20, 0}, Cell::Obstacle);
  m.raise({21, 0}, Cell::Obstacle);
  m.begin_session();
  m.observe_hit({21, 0});
  for (std::uint32_t key = 1; key <= 2; ++key) {
    m.observe_pass({20, 0}, key);
    m.observe_pass({20, 0}, key);  // same pose counts once
  }
  EXPECT_EQ(m.at({20, 0}), Cell::Obstacle);
  m.observe_pass({20, 0}, 3);
  EXPECT_EQ(m.at({20, 0}), Cell::Free);
  EXPECT_EQ(m.cleared_count(), 1u);
  for (std::uint32_t key = 1; key <= 5; ++key) m.observe_pass({21, 0}, key);
  EXPECT_EQ(m.at({21, 0}), Cell::Obstacle);
  EXPECT_TRUE(m.session_hit({21, 0}));
}

TEST(SessionClearing, SessionTraversabilityIgnoresOldObstacles) {
  OccupancyMap m(0.05);
  for (int x = 0; x < 40; ++x) m.raise({x, 0}, Cell::Free);
  m.raise({10, 0}, Cell::Obstacle);
  m.begin_session();
  m.observe_hit({30, 0});
  const TraversabilityGrid g = build_session_traversability(m, 0.0);
  EXPECT_TRUE(g.traversable({10, 0}));
  EXPECT_FALSE(g.traversable({30, 0}));
}
