#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "absnav/geometry.hpp"
#include "absnav/world.hpp"

namespace absnav {

/// Appearance features of one view. Always unit L2 norm.
struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

/// 1 - cosine similarity, in [0, 2].
double cos_dist(const FeatureVector& a, const FeatureVector& b);

struct FeatureConfig {
  int dim = 64;
  /// Spatial cell size of the appearance lattice (meters).
  double cell_size = 0.5;
  /// Heading bin width; matches the turn quantum.
  double bin_width = deg_to_rad(30.0);
  /// Half-width of the separable tent kernel, in cells. 1.75 keeps the
  /// support inside the 3x3 neighborhood of the home cell.
  double kernel_half_width = 1.75;
  /// Norm scale of the per-frame Gaussian perturbation.
  double sigma = 0.05;
};

/// Unit base vector for one (cell, heading bin) of a scene's appearance.
FeatureVector base_feature(std::uint64_t scene_latent, std::int64_t cell_x, std::int64_t cell_y,
                           int bin, const FeatureConfig& cfg);

int heading_bin(double theta, const FeatureConfig& cfg);

/// Deterministic stand-in for an image encoder: a tent-smoothed blend of the
/// base vectors around `pose`, plus keyed noise, normalized.
FeatureVector synthesize_features(std::uint64_t scene_latent, const Pose& pose,
                                  std::uint64_t noise_key, const FeatureConfig& cfg = {});

struct ObjectView {
  int class_id = 0;
  Vec2 map_position{};
  BoundingBox bbox{};
  double distance = 0.0;
};

struct AbstractState {
  int id = -1;
  FeatureVector features;
  std::set<int> classes;
  std::vector<ObjectView> object_views;
  Pose anchor_pose{};
};

/// Object position from the depth at the bounding-box centroid.
Vec2 localize_object(const Detection& det, const Pose& pose);

/// The State Creator. `model_frame_pose` is frame.pose expressed in the
/// current model's frame.
AbstractState create_state(const SensorFrame& frame, const Pose& model_frame_pose,
                           const FeatureConfig& cfg = {});

}  // namespace absnav
