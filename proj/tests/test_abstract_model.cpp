#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "absnav/abstract_model.hpp"
#include "absnav/errors.hpp"
#include "oracles.hpp"

using namespace absnav;

namespace {

AbstractState state_with(FeatureVector f, Pose anchor = {}) {
  AbstractState s;
  s.features = std::move(f);
  s.anchor_pose = anchor;
  return s;
}

AbstractState view_state(int dim, int k, std::vector<std::pair<int, Vec2>> views) {
  FeatureVector f;
  f.values.assign(static_cast<std::size_t>(dim), 0.0);
  f.values[static_cast<std::size_t>(k)] = 1.0;
  AbstractState s = state_with(f);
  for (auto [c, p] : views) {
    ObjectView v;
    v.class_id = c;
    v.map_position = p;
    v.distance = 1.0;
    s.object_views.push_back(v);
    s.classes.insert(c);
  }
  return s;
}


}  // namespace

TEST(AbstractModel, InsertDedupsAtThreshold) {
  AbstractModel m;
  EXPECT_EQ(insert_state(m, state_with(oracle::at_distance(0.0, 8))), 0);
  EXPECT_EQ(insert_state(m, state_with(oracle::at_distance(0.04, 8))), 0);
  EXPECT_EQ(insert_state(m, state_with(oracle::at_distance(0.2, 8))), 1);
  EXPECT_EQ(m.states.size(), 2u);
}

TEST(AbstractModel, InsertUnionsViews) {
  AbstractModel m;
  insert_state(m, view_state(4, 0, {{1, {1, 1}}}));
  insert_state(m, view_state(4, 0, {{1, {1, 1}}, {2, {3, 3}}}));
  ASSERT_EQ(m.states.size(), 1u);
  EXPECT_EQ(m.states[0].object_views.size(), 2u);
  EXPECT_EQ(m.states[0].classes, (std::set<int>{1, 2}));
}

TEST(AbstractModel, TransitionsLatestWins) {
  AbstractModel m;
  for (int k = 0; k < 3; ++k) insert_state(m, view_state(4, k, {}));
  record_transition(m, 0, Action::MoveForward, 1);
  record_transition(m, 0, Action::MoveForward, 1);
  EXPECT_EQ(m.transition_conflicts, 0u);
  record_transition(m, 0, Action::MoveForward, 2);
  EXPECT_EQ(m.transitions.at({0, Action::MoveForward}), 2);
  EXPECT_EQ(m.transition_conflicts, 1u);
  EXPECT_THROW(record_transition(m, 0, Action::Stop, 1), std::invalid_argument);
  EXPECT_THROW(record_transition(m, 0, Action::TurnLeft, 3), std::out_of_range);
}

TEST(Matcher, AgreesWithBruteForce) {
  KeyedRng rng{71};
  for (int trial = 0; trial < 1000; ++trial) {
    ModelStore store;
    const int n_models = static_cast<int>(rng.below(8));
    const int dim = 8 + static_cast<int>(rng.below(3)) * 8;
    for (int k = 0; k < n_models; ++k) store.add(oracle::random_model(rng, 1 + static_cast<int>(rng.below(40)), dim));
    AbstractState q;
    if (!store.empty() && rng.uniform() < 0.3) {
      // Exact duplicate of a stored state: ties must break toward the lowest ids.
      const auto& m = store.models[rng.below(store.models.size())];
      q = m.states[rng.below(m.states.size())];
    } else if (!store.empty() && rng.uniform() < 0.5) {
      const auto& m = store.models[rng.below(store.models.size())];
      q = m.states[rng.below(m.states.size())];
      for (double& v : q.features.values) v += rng.uniform(-0.2, 0.2);
    } else {
      q.features = oracle::random_unit(rng, dim);
    }
    const double threshold = rng.uniform(0.0, 1.2);
    const auto got = best_match(store, q, threshold);
    const auto want = oracle::brute_best_match(store, q.features, threshold);
    ASSERT_EQ(got.has_value(), want.has_value()) << "trial " << trial;
    if (!got) continue;
    EXPECT_EQ(got->model_id, want->model_id);
    EXPECT_EQ(got->state_id, want->state_id);
    EXPECT_NEAR(got->distance, want->distance, 1e-12);
  }
}

TEST(Matcher, DuplicateTiesGoToLowestIds) {
  ModelStore store;
  for (int k = 0; k < 3; ++k) {
    AbstractModel m;
    insert_state(m, view_state(4, 3, {}));
    insert_state(m, view_state(4, 0, {}));
    store.add(m);
  }
  const auto r = best_match(store, view_state(4, 0, {}));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->model_id, 0);
  EXPECT_EQ(r->state_id, 1);
  EXPECT_NEAR(r->distance, 0.0, 1e-15);
}

TEST(Matcher, ThresholdBoundaryIsInclusive) {
  ModelStore store;
  AbstractModel m;
  insert_state(m, state_with(oracle::at_distance(0.0, 4)));
  store.add(m);
  EXPECT_TRUE(best_match(store, state_with(oracle::at_distance(0.299, 4)), 0.3));
  EXPECT_TRUE(best_match(store, state_with(oracle::at_distance(0.300, 4)), 0.3));
  EXPECT_FALSE(best_match(store, state_with(oracle::at_distance(0.301, 4)), 0.3));
  EXPECT_FALSE(best_match(ModelStore{}, state_with(oracle::at_distance(0.0, 4))));
}

TEST(Matcher, TransformTakesQueryAnchorOntoMatch) {
  ModelStore store;
  AbstractModel m;
  insert_state(m, state_with(oracle::at_distance(0.0, 4), {3, 4, 1.0}));
  store.add(m);
  const auto r = best_match(store, state_with(oracle::at_distance(0.1, 4), {-1, 2, -0.5}));
  ASSERT_TRUE(r);
  const Pose p = r->transform.apply(Pose{-1, 2, -0.5});
  EXPECT_NEAR(p.x, 3, 1e-12);
  EXPECT_NEAR(p.y, 4, 1e-12);
  EXPECT_NEAR(p.theta, 1.0, 1e-12);
}

TEST(Merge, InvariantsOnRandomScenarios) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    oracle::MergeScenario sc = oracle::make_scenario(seed);
    ModelStore store;
    store.add(sc.target);
    const auto match = best_match(store, sc.current.states[static_cast<std::size_t>(sc.query)]);
    ASSERT_TRUE(match) << seed;
    AbstractModel merged = store.models[0];
    const int expected = oracle::expected_unifications(merged, sc.current, sc.query, 0.05);
    const std::size_t views_before = merged.object_view_count();
    const MergeResult r = merge_into(merged, sc.current, *match, sc.query);

    EXPECT_TRUE(oracle::partial_function_ok(merged)) << seed;
    EXPECT_EQ(r.unified, expected) << seed;
    EXPECT_EQ(merged.states.size(), sc.target.states.size() + sc.current.states.size() - static_cast<std::size_t>(r.unified))
        << seed;
    const Pose a = match->transform.apply(sc.current.states[static_cast<std::size_t>(sc.query)].anchor_pose);
    const Pose b = merged.states[static_cast<std::size_t>(match->state_id)].anchor_pose;
    EXPECT_LT(distance(a.position(), b.position()), 1e-9) << seed;
    EXPECT_LT(std::abs(std::remainder(a.theta - b.theta, kTwoPi)), 1e-9) << seed;
    EXPECT_EQ(r.id_map[static_cast<std::size_t>(sc.query)], match->state_id);
    // Every transition of the merged-in model survives under the id map,
    // unless a later one overwrote the same key.
    for (const auto& [k, v] : sc.current.transitions) {
      const auto it = merged.transitions.find({r.id_map[static_cast<std::size_t>(k.first)], k.second});
      ASSERT_NE(it, merged.transitions.end()) << seed;
    }
    EXPECT_LE(merged.object_view_count(), views_before + sc.current.object_view_count());
    EXPECT_GE(merged.object_view_count(), views_before);
    // Old states keep their ids and features.
    for (std::size_t i = 0; i < sc.target.states.size(); ++i)
      EXPECT_EQ(merged.states[i].features.values, sc.target.states[i].features.values);
  }
}

TEST(Merge, EmptyModelIsIdentity) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    oracle::MergeScenario sc = oracle::make_scenario(seed);
    AbstractModel merged = sc.target;
    MatchResult m;
    m.model_id = 0;
    m.state_id = 0;
    m.transform = sc.truth;
    const MergeResult r = merge_into(merged, AbstractModel{}, m, -1);
    EXPECT_EQ(r.unified, 0);
    ASSERT_EQ(merged.states.size(), sc.target.states.size());
    for (std::size_t i = 0; i < merged.states.size(); ++i) {
      EXPECT_EQ(merged.states[i].features.values, sc.target.states[i].features.values);
      EXPECT_EQ(merged.states[i].object_views.size(), sc.target.states[i].object_views.size());
    }
    EXPECT_EQ(merged.transitions, sc.target.transitions);
    EXPECT_TRUE(merged.map == sc.target.map);
  }
}

TEST(Merge, RejectsBadInput) {
  AbstractModel t;
  insert_state(t, view_state(4, 0, {}));
  AbstractModel c;
  insert_state(c, view_state(4, 1, {}));
  MatchResult m;
  m.state_id = 5;
  EXPECT_THROW(merge_into(t, c, m, 0), std::out_of_range);
  m.state_id = 0;
  m.transform.translation.x = std::nan("");
  EXPECT_THROW(merge_into(t, c, m, 0), InvalidTransform);
}

TEST(GoalQuery, ClustersAndRanksByVisibility) {
  AbstractModel m;
  // Three states see a chair near (5, 5); one sees a chair at (1, 0).
  insert_state(m, view_state(8, 0, {{2, {5.0, 5.0}}}));
  insert_state(m, view_state(8, 1, {{2, {5.2, 5.0}}}));
  insert_state(m, view_state(8, 2, {{2, {5.1, 5.3}}, {3, {0, 0}}}));
  insert_state(m, view_state(8, 3, {{2, {1.0, 0.0}}}));
  const auto cands = goal_candidates(m, 2);
  ASSERT_EQ(cands.size(), 2u);
  EXPECT_EQ(cands[0].visibility, 1);
  EXPECT_EQ(cands[1].visibility, 3);
  EXPECT_NEAR(cands[1].centroid.x, 5.1, 1e-12);
  EXPECT_NEAR(cands[1].centroid.y, 5.1, 1e-12);

  // top_k = 1 keeps only the best seen; a larger k picks the nearest.
  GoalQueryConfig one;
  one.top_k = 1;
  EXPECT_NEAR(query_goal(m, 2, {0, 0}, one)->x, 5.1, 1e-12);
  EXPECT_NEAR(query_goal(m, 2, {0, 0})->x, 1.0, 1e-12);
  GoalQueryConfig vis;
  vis.min_visibility = 2;
  EXPECT_NEAR(query_goal(m, 2, {0, 0}, vis)->x, 5.1, 1e-12);
  GoalQueryConfig ex;
  ex.excluded = {{1.1, 0.0}};
  EXPECT_NEAR(query_goal(m, 2, {0, 0}, ex)->x, 5.1, 1e-12);
  EXPECT_FALSE(query_goal(m, 7, {0, 0}));
}

TEST(GoalQuery, SingleLinkChains) {
  AbstractModel m;
  insert_state(m, view_state(4, 0, {{1, {0, 0}}, {1, {0.45, 0}}, {1, {0.9, 0}}, {1, {2.0, 0}}}));
  const auto c = goal_candidates(m, 1);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].view_count, 3u);
  EXPECT_EQ(c[0].visibility, 1);
  EXPECT_NEAR(c[0].centroid.x, 0.45, 1e-12);
}

TEST(GoalQuery, InvariantUnderStateOrder) {
  KeyedRng rng{72};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<AbstractState> states;
    for (int i = 0; i < 12; ++i) {
      std::vector<std::pair<int, Vec2>> views;
      for (int k = 0; k < 3; ++k) views.push_back({static_cast<int>(rng.below(2)), {rng.uniform(0, 6), rng.uniform(0, 6)}});
      states.push_back(view_state(12, i, views));
    }
    const Vec2 agent{rng.uniform(0, 6), rng.uniform(0, 6)};
    AbstractModel a, b;
    for (const auto& s : states) insert_state(a, s);
    std::shuffle(states.begin(), states.end(), rng);
    for (const auto& s : states) insert_state(b, s);
    const auto ga = query_goal(a, 0, agent);
    const auto gb = query_goal(b, 0, agent);
    ASSERT_EQ(ga.has_value(), gb.has_value());
    if (ga) {
      EXPECT_EQ(ga->x, gb->x);
      EXPECT_EQ(ga->y, gb->y);
    }
  }
}

TEST(ModelIo, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "absnav_model_io";
  std::filesystem::remove_all(dir);
  oracle::MergeScenario sc = oracle::make_scenario(9);
  ModelStore store;
  store.add(sc.target);
  store.add(sc.current);
  save_store(store, dir);
  const ModelStore back = load_store(dir);
  ASSERT_EQ(back.models.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& x = store.models[k];
    const auto& y = back.models[k];
    EXPECT_EQ(x.id, y.id);
    EXPECT_EQ(x.transitions, y.transitions);
    EXPECT_TRUE(x.map == y.map);
    ASSERT_EQ(x.states.size(), y.states.size());
    for (std::size_t i = 0; i < x.states.size(); ++i) {
      EXPECT_EQ(x.states[i].features.values, y.states[i].features.values);
      EXPECT_EQ(x.states[i].anchor_pose, y.states[i].anchor_pose);
      EXPECT_EQ(x.states[i].object_views.size(), y.states[i].object_views.size());
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(ModelIo, RejectsDanglingTransition) {
  const auto dir = std::filesystem::temp_directory_path() / "absnav_model_bad";
  std::filesystem::create_directories(dir);
  AbstractModel m;
  insert_state(m, view_state(4, 0, {}));
  save_model(m, dir / "m.json");
  {
    std::ofstream out(dir / "m.json");
    out << R"({"format":"absnav-model","version":1,"id":0,"map":"m.occ","states":[{"id":0,"anchor":[0,0,0],)"
           R"("features":[1,0,0,0],"views":[]}],"transitions":[[0,"move_forward",3]]})";
  }
  EXPECT_THROW(load_model(dir / "m.json"), FormatError);
  EXPECT_THROW(load_model(dir / "missing.json"), FormatError);
  std::filesystem::remove_all(dir);
}
