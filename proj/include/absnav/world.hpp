#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "absnav/geometry.hpp"

namespace absnav {

enum class Action { MoveForward, TurnLeft, TurnRight, Stop };

const char* to_string(Action a);
Action action_from_string(const std::string& s);

struct ObjectInstance {
  int id = 0;
  int class_id = 0;
  Vec2 centroid{};
  double radius = 0.25;
};

struct Scene {
  std::string id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Rect> walls;
  std::vector<ObjectInstance> objects;
  std::uint64_t seed = 0;
  int num_classes = 8;

  Rect bounds() const { return {0.0, 0.0, width, height}; }

  /// Inside bounds and outside every wall.
  bool is_free(Vec2 p) const;
  /// Euclidean clearance from `p` to the nearest wall or boundary.
  double clearance(Vec2 p) const;
  std::vector<const ObjectInstance*> instances_of(int class_id) const;
  /// L2 distance to the nearest instance of `class_id`; +inf if none.
  double distance_to_class(Vec2 p, int class_id) const;
};

/// Throws ConfigError when a scene invariant is violated.
void validate_scene(const Scene& scene);

struct WorldConfig {
  double agent_radius = 0.1;
  double forward_step = 0.25;
  double turn_angle = deg_to_rad(30.0);
};

struct SensorConfig {
  int num_rays = 128;
  double fov = deg_to_rad(90.0);
  double max_range = 5.0;
  double p_det = 0.9;
  double p_fp = 0.05;
  double sigma_pos = 0.10;
  double phantom_radius = 0.25;
};

/// Bearing of ray `r`; rays tile [-fov/2, fov/2) evenly so ray num_rays/2 is
/// the optical axis.
double ray_bearing(int r, const SensorConfig& cfg);

struct BoundingBox {
  double angle_min = 0.0;
  double angle_max = 0.0;
  double range_min = 0.0;
  double range_max = 0.0;
};

struct Detection {
  int class_id = 0;
  BoundingBox bbox{};
  double centroid_range = 0.0;
  double centroid_bearing = 0.0;
  /// Ground truth; the episode runner clears it before the agent sees a frame.
  bool is_phantom = false;
  /// Ground-truth object id, -1 for phantoms. Also cleared for the agent.
  int object_id = -1;
};

/// What the feature synthesizer consumes in place of an RGB image: the
/// scene's appearance latent rendered from the true camera pose.
struct ViewSignature {
  std::uint64_t scene_latent = 0;
  Pose view_pose{};
  std::uint64_t noise_key = 0;
};

struct SensorFrame {
  std::vector<double> depth;
  std::vector<Detection> detections;
  /// Relative to the episode start pose.
  Pose pose{};
  ViewSignature view{};
};

struct EpisodeSpec {
  std::string scene_id;
  Pose start_pose{};
  int goal_class = 0;
  int max_steps = 500;
  double success_radius = 1.0;
  std::uint64_t episode_id = 0;
};

/// Throws ConfigError if `spec` is not runnable in `scene`.
void validate_episode(const Scene& scene, const EpisodeSpec& spec, const WorldConfig& world);

/// Distance along a ray to the first wall or boundary, capped at max_range.
double cast_ray(const Scene& scene, Vec2 origin, double heading, double max_range);

/// Kinematics. Turns are exact; a forward move whose swept disc touches a
/// wall or leaves the bounds is a no-op. Stop is rejected.
Pose step(const Scene& scene, const Pose& pose, Action action, const WorldConfig& world = {});

/// Simulated perception at scene-frame `pose`. All randomness is keyed by
/// (scene.seed, episode_id, step_index).
SensorFrame sense(const Scene& scene, const Pose& pose, const Pose& start_pose,
                  std::uint64_t episode_id, int step_index, const SensorConfig& cfg = {});

/// Noiseless visibility oracle: ids of objects whose centroid is inside the
/// field-of-view wedge, within range and unoccluded.
std::vector<int> visible_objects(const Scene& scene, const Pose& pose, const SensorConfig& cfg);

Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path);
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

}  // namespace absnav
