#include <gtest/gtest.h>

#include "absnav/errors.hpp"
#include "absnav/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace absnav;
using namespace absnav::testing;

namespace {

EpisodeRecord rec(bool s, double l, double p, double d_init = 1.0, double d_T = 0.0, double final_d = 0.0) {
  EpisodeRecord r;
  r.success = s;
  r.shortest_path = l;
  r.path_length = p;
  r.d_init = d_init;
  r.d_T = d_T;
  r.final_distance = final_d;
  return r;
}

/// Failed, relocated record whose last step carries `info`.
EpisodeRecord failed_relocated(double final_d, DecisionInfo info, std::optional<Vec2> goal = {}) {
  EpisodeRecord r = rec(false, 5, 5, 5, final_d, final_d);
  r.relocated = true;
  r.spec.goal_class = 1;
  StepEvent ev;
  ev.info = std::move(info);
  ev.info.relocated = true;
  ev.goal_point_scene = goal;
  r.trace.push_back(ev);
  return r;
}

Scene two_object_scene() {
  Scene s = open_scene(20, 20);
  s.objects.push_back(object(0, 1, {2, 2}));
  s.objects.push_back(object(1, 2, {15, 15}));
  return s;
}

}  // namespace

TEST(Metrics, MatchIndependentFormulas) {
  KeyedRng rng{91};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rs = oracle::random_records(rng, 1 + rng.below(60));
    EXPECT_NEAR(success_rate(rs), oracle::f_success(rs), 1e-12);
    EXPECT_NEAR(spl(rs), oracle::f_spl(rs), 1e-12);
    EXPECT_NEAR(soft_spl(rs), oracle::f_soft_spl(rs), 1e-12);
    EXPECT_NEAR(dts(rs), oracle::f_dts(rs), 1e-12);
  }
}

TEST(Metrics, HandCases) {
  const std::vector<EpisodeRecord> a{rec(true, 4, 5)};
  EXPECT_EQ(spl(a), 0.8);
  EXPECT_EQ(spl(std::vector{rec(true, 4, 4)}), 1.0);
  EXPECT_EQ(spl(std::vector{rec(false, 4, 9)}), 0.0);
  const std::vector<EpisodeRecord> b{rec(false, 10, 12, 10, 2)};
  EXPECT_EQ(soft_spl(b), 2.0 / 3.0);
  EXPECT_EQ(soft_spl(std::vector{rec(true, 3, 3, 3, 0)}), 1.0);
  EXPECT_EQ(soft_spl(std::vector{rec(false, 3, 3, 3, 7)}), 0.0);
  const std::vector<EpisodeRecord> c{rec(false, 1, 1, 1, 0, 0.5), rec(false, 1, 1, 1, 0, 3.0)};
  EXPECT_EQ(dts(c), 1.0);
  EXPECT_EQ(dts(std::vector{rec(false, 1, 1, 1, 0, 1.0)}), 0.0);
  EXPECT_EQ(success_rate(std::vector{rec(true, 1, 1), rec(false, 1, 1), rec(false, 1, 1), rec(true, 1, 1)}), 0.5);
}

TEST(Metrics, BoundsAndOrdering) {
  KeyedRng rng{92};
  for (int trial = 0; trial < 500; ++trial) {
    const auto rs = oracle::random_records(rng, 1 + rng.below(40));
    const double s = success_rate(rs), p = spl(rs), q = soft_spl(rs);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, s + 1e-15);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
    EXPECT_GE(dts(rs), 0.0);
  }
}

TEST(Metrics, Errors) {
  const std::vector<EpisodeRecord> none;
  EXPECT_THROW(success_rate(none), EmptySet);
  EXPECT_THROW(spl(none), EmptySet);
  EXPECT_EQ(dts(none), 0.0);
  EXPECT_THROW(spl(std::vector{rec(true, 0, 1)}), InvalidRecord);
  EXPECT_THROW(soft_spl(std::vector{rec(true, 1, 1, 0)}), InvalidRecord);
}

TEST(Metrics, MovingAverage) {
  const std::vector<double> step{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const auto m = moving_average(step);
  EXPECT_EQ(m[9], 1.0);
  EXPECT_EQ(m[4], 0.0);
  const std::vector<double> alt{1, 0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(moving_average(alt)[4], 0.6);
  EXPECT_DOUBLE_EQ(moving_average(alt)[1], 0.5);
  const auto flat = moving_avg_success({{1, 1, 1}, {1, 1, 1}});
  for (double v : flat) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(moving_avg_success({{1, 0}, {0, 0}})[0], 0.5);
}

TEST(Metrics, Slope) {
  EXPECT_DOUBLE_EQ(ls_slope(std::vector<double>{1, 3, 5, 7}), 2.0);
  EXPECT_DOUBLE_EQ(ls_slope(std::vector<double>{4, 4, 4}), 0.0);
  EXPECT_EQ(ls_slope(std::vector<double>{4}), 0.0);
}

TEST(FailureTaxonomy, HandCases) {
  const Scene scene = two_object_scene();
  EXPECT_EQ(classify_failure(failed_relocated(1.4, {}), scene), FailureClass::LastMile);

  DecisionInfo model;
  model.goal_source = GoalSource::Model;
  model.search_radius = 0.5;
  EXPECT_EQ(classify_failure(failed_relocated(8, model, Vec2{10, 10}), scene), FailureClass::Hallucination);

  EpisodeRecord ph = failed_relocated(8, {});
  ph.stopped = true;
  ph.trace.back().info.stop_detection = 0;
  ph.trace.back().trigger_phantom = true;
  ph.trace.back().trigger_class = 1;
  EXPECT_EQ(classify_failure(ph, scene), FailureClass::Detection);

  DecisionInfo empty;
  empty.reloaded_goal_views = 0;
  EXPECT_EQ(classify_failure(failed_relocated(8, empty), scene), FailureClass::Exploration);

  DecisionInfo had;
  had.reloaded_goal_views = 4;
  EXPECT_EQ(classify_failure(failed_relocated(8, had), scene), FailureClass::Misc);

  EpisodeRecord ok = failed_relocated(0.1, {});
  ok.success = true;
  EXPECT_THROW(classify_failure(ok, scene), NotApplicable);
  EpisodeRecord local = failed_relocated(8, {});
  local.relocated = false;
  EXPECT_THROW(classify_failure(local, scene), NotApplicable);
}

TEST(FailureTaxonomy, TotalOverRandomRecords) {
  const Scene scene = two_object_scene();
  KeyedRng rng{93};
  for (int trial = 0; trial < 2000; ++trial) {
    DecisionInfo info;
    info.goal_source = static_cast<GoalSource>(rng.below(3));
    if (rng.uniform() < 0.5) info.search_radius = rng.uniform(0.5, 2.0);
    info.reloaded_goal_views = static_cast<int>(rng.below(4)) - 1;
    info.stop_detection = static_cast<int>(rng.below(3)) - 1;
    std::optional<Vec2> goal;
    if (rng.uniform() < 0.7) goal = Vec2{rng.uniform(0, 20), rng.uniform(0, 20)};
    EpisodeRecord r = failed_relocated(rng.uniform(0, 15), info, goal);
    r.stopped = rng.uniform() < 0.5;
    r.trace.back().trigger_phantom = rng.uniform() < 0.3;
    r.trace.back().trigger_class = static_cast<int>(rng.below(3));
    r.trace.back().trigger_object = static_cast<int>(rng.below(3)) - 1;
    if (rng.uniform() < 0.1) r.trace.clear();
    const FailureClass c = classify_failure(r, scene);
    EXPECT_GE(static_cast<int>(c), 0);
    EXPECT_LE(static_cast<int>(c), static_cast<int>(FailureClass::Misc));
    if (r.final_distance < 2.0) {
      EXPECT_EQ(c, FailureClass::LastMile);
    }
  }
}
