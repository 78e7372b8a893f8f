#include "absnav/perception.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "absnav/rng.hpp"

namespace absnav {
namespace {

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (n > 0.0)
    for (double& x : v) x /= n;
}

double tent(double offset, double half_width) {
  return std::max(0.0, 1.0 - std::abs(offset) / half_width);
}

}  // namespace

double cos_dist(const FeatureVector& a, const FeatureVector& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    ab += a.values[i] * b.values[i];
    aa += a.values[i] * a.values[i];
    bb += b.values[i] * b.values[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return 1.0;
  return std::clamp(1.0 - ab / std::sqrt(aa * bb), 0.0, 2.0);
}

int heading_bin(double theta, const FeatureConfig& cfg) {
  const int bins = static_cast<int>(std::lround(kTwoPi / cfg.bin_width));
  const int b = static_cast<int>(std::lround(theta / cfg.bin_width));
  return ((b % bins) + bins) % bins;
}

FeatureVector base_feature(std::uint64_t scene_latent, std::int64_t cell_x, std::int64_t cell_y,
                           int bin, const FeatureConfig& cfg) {
  KeyedRng rng{scene_latent, as_key(cell_x), as_key(cell_y), as_key(bin), 0xBA5EULL};
  std::normal_distribution<double> gauss(0.0, 1.0);
  FeatureVector f;
  f.values.resize(static_cast<std::size_t>(cfg.dim));
  for (double& v : f.values) v = gauss(rng);
  normalize(f.values);
  return f;
}

FeatureVector synthesize_features(std::uint64_t scene_latent, const Pose& pose,
                                  std::uint64_t noise_key, const FeatureConfig& cfg) {
  const int bin = heading_bin(pose.theta, cfg);
  const double u = pose.x / cfg.cell_size;
  const double v = pose.y / cfg.cell_size;
  const auto home_x = static_cast<std::int64_t>(std::floor(u));
  const auto home_y = static_cast<std::int64_t>(std::floor(v));

  FeatureVector out;
  out.values.assign(static_cast<std::size_t>(cfg.dim), 0.0);
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    const double wx = tent(u - (static_cast<double>(home_x + dx) + 0.5), cfg.kernel_half_width);
    if (wx <= 0.0) continue;
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      const double wy = tent(v - (static_cast<double>(home_y + dy) + 0.5), cfg.kernel_half_width);
      if (wy <= 0.0) continue;
      const FeatureVector b = base_feature(scene_latent, home_x + dx, home_y + dy, bin, cfg);
      for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += wx * wy * b.values[i];
    }
  }

  if (cfg.sigma > 0.0) {
    KeyedRng rng{noise_key, 0xE95ULL};
    std::normal_distribution<double> gauss(0.0, cfg.sigma / std::sqrt(static_cast<double>(cfg.dim)));
    for (double& x : out.values) x += gauss(rng);
  }
  normalize(out.values);
  return out;
}

Vec2 localize_object(const Detection& det, const Pose& pose) {
  const double a = pose.theta + det.centroid_bearing;
  return {pose.x + det.centroid_range * std::cos(a), pose.y + det.centroid_range * std::sin(a)};
}

AbstractState create_state(const SensorFrame& frame, const Pose& model_frame_pose,
                           const FeatureConfig& cfg) {
  AbstractState s;
  s.features = synthesize_features(frame.view.scene_latent, frame.view.view_pose,
                                   frame.view.noise_key, cfg);
  s.anchor_pose = model_frame_pose;
  s.object_views.reserve(frame.detections.size());
  for (const Detection& det : frame.detections) {
    ObjectView view;
    view.class_id = det.class_id;
    view.map_position = localize_object(det, model_frame_pose);
    view.bbox = det.bbox;
    view.distance = det.centroid_range;
    s.object_views.push_back(view);
    s.classes.insert(det.class_id);
  }
  return s;
}

}  // namespace absnav
