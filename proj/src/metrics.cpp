#include "absnav/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "absnav/errors.hpp"

namespace absnav {
namespace {

double efficiency(const EpisodeRecord& r) { return r.shortest_path / std::max(r.path_length, r.shortest_path); }

void require_records(std::span<const EpisodeRecord> records) {
  if (records.empty()) throw EmptySet("metric over zero records");
}

}  // namespace

double success_rate(std::span<const EpisodeRecord> records) {
  require_records(records);
  double n = 0.0;
  for (const auto& r : records) n += r.success ? 1.0 : 0.0;
  return n / static_cast<double>(records.size());
}

double spl(std::span<const EpisodeRecord> records) {
  require_records(records);
  double sum = 0.0;
  for (const auto& r : records) {
    if (!(r.shortest_path > 0.0)) throw InvalidRecord("shortest path must be positive");
    if (r.success) sum += efficiency(r);
  }
  return sum / static_cast<double>(records.size());
}

double soft_spl(std::span<const EpisodeRecord> records) {
  require_records(records);
  double sum = 0.0;
  for (const auto& r : records) {
    if (!(r.d_init > 0.0)) throw InvalidRecord("initial distance must be positive");
    if (!(r.shortest_path > 0.0)) throw InvalidRecord("shortest path must be positive");
    // One division: (d_init - d_T) l / (d_init max(p, l)) rounds once, so
    // simple ratios such as 8/10 * 10/12 come out as exactly 2/3.
    if (r.d_T >= r.d_init) continue;
    sum += (r.d_init - r.d_T) * r.shortest_path / (r.d_init * std::max(r.path_length, r.shortest_path));
  }
  return sum / static_cast<double>(records.size());
}

double dts(std::span<const EpisodeRecord> records, double d) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) sum += std::max(r.final_distance - d, 0.0);
  return sum / static_cast<double>(records.size());
}

double relocation_rate(std::span<const EpisodeRecord> records) {
  if (records.empty()) return 0.0;
  double n = 0.0;
  for (const auto& r : records) n += r.relocated ? 1.0 : 0.0;
  return n / static_cast<double>(records.size());
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) window = 1;
  std::vector<double> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const std::size_t lo = k + 1 >= window ? k + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t i = lo; i <= k; ++i) sum += values[i];
    out[k] = sum / static_cast<double>(k - lo + 1);
  }
  return out;
}

std::vector<double> moving_avg_success(const std::vector<std::vector<double>>& per_env, std::size_t window) {
  std::size_t len = 0;
  for (const auto& e : per_env) len = std::max(len, e.size());
  std::vector<double> mean(len, 0.0);
  for (std::size_t k = 0; k < len; ++k) {
    double sum = 0.0;
    int n = 0;
    for (const auto& e : per_env)
      if (k < e.size()) {
        sum += e[k];
        ++n;
      }
    mean[k] = sum / n;
  }
  return moving_average(mean, window);
}

double ls_slope(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) return 0.0;
  const double xm = (n - 1.0) / 2.0;
  double ym = 0.0;
  for (double v : values) ym += v;
  ym /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double dx = static_cast<double>(i) - xm;
    sxy += dx * (values[i] - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

FailureClass classify_failure(const EpisodeRecord& record, const Scene& scene) {
  if (record.success) throw NotApplicable("episode succeeded");
  if (!record.relocated) throw NotApplicable("episode never relocated");
  if (record.final_distance < 2.0) return FailureClass::LastMile;

  const StepEvent* last = record.trace.empty() ? nullptr : &record.trace.back();
  const int goal = record.spec.goal_class;
  if (last && last->info.goal_source == GoalSource::Model && last->goal_point_scene) {
    const double reach = last->info.search_radius.value_or(0.0) + 1.0;
    if (!(scene.distance_to_class(*last->goal_point_scene, goal) <= reach)) return FailureClass::Hallucination;
  }

  if (record.stopped && last && last->info.stop_detection >= 0) {
    bool wrong = last->trigger_phantom || last->trigger_class != goal;
    if (!wrong && last->trigger_object >= 0)
      for (const auto& o : scene.objects)
        if (o.id == last->trigger_object && o.class_id != goal) wrong = true;
    if (wrong) return FailureClass::Detection;
  }

  int reloaded_views = -1;
  bool ever_model = false;
  for (const auto& ev : record.trace) {
    if (reloaded_views < 0 && ev.info.reloaded_goal_views >= 0) reloaded_views = ev.info.reloaded_goal_views;
    if (ev.info.goal_source == GoalSource::Model) ever_model = true;
  }
  if (reloaded_views == 0 && !ever_model) return FailureClass::Exploration;
  return FailureClass::Misc;
}

}  // namespace absnav
