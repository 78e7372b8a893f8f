#include "absnav/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "absnav/errors.hpp"
#include "absnav/rng.hpp"

namespace absnav {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinRange = 1e-3;
constexpr std::uint64_t kSenseStream = 0x53454E5345ULL;

}  // namespace

const char* to_string(Action a) {
  switch (a) {
    case Action::MoveForward: return "move_forward";
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
    case Action::Stop: return "stop";
  }
  return "?";
}

Action action_from_string(const std::string& s) {
  if (s == "move_forward") return Action::MoveForward;
  if (s == "turn_left") return Action::TurnLeft;
  if (s == "turn_right") return Action::TurnRight;
  if (s == "stop") return Action::Stop;
  throw FormatError("unknown action '" + s + "'");
}

bool Scene::is_free(Vec2 p) const {
  if (p.x < 0.0 || p.y < 0.0 || p.x > width || p.y > height) return false;
  return std::none_of(walls.begin(), walls.end(), [&](const Rect& w) { return w.contains(p); });
}

double Scene::clearance(Vec2 p) const {
  double c = std::min({p.x, p.y, width - p.x, height - p.y});
  for (const Rect& w : walls) c = std::min(c, point_rect_distance(p, w));
  return c;
}

std::vector<const ObjectInstance*> Scene::instances_of(int class_id) const {
  std::vector<const ObjectInstance*> out;
  for (const auto& o : objects)
    if (o.class_id == class_id) out.push_back(&o);
  return out;
}

double Scene::distance_to_class(Vec2 p, int class_id) const {
  double best = kInf;
  for (const auto& o : objects)
    if (o.class_id == class_id) best = std::min(best, distance(p, o.centroid));
  return best;
}

void validate_scene(const Scene& scene) {
  if (!(scene.width > 0.0) || !(scene.height > 0.0))
    throw ConfigError("scene '" + scene.id + "': bounds must be positive");
  if (scene.num_classes <= 0) throw ConfigError("scene '" + scene.id + "': num_classes must be positive");
  std::set<int> ids;
  for (const auto& o : scene.objects) {
    if (!ids.insert(o.id).second)
      throw ConfigError("scene '" + scene.id + "': duplicate object id " + std::to_string(o.id));
    if (!(o.radius > 0.0))
      throw ConfigError("scene '" + scene.id + "': object radius must be positive");
    if (o.class_id < 0 || o.class_id >= scene.num_classes)
      throw ConfigError("scene '" + scene.id + "': invalid class id " + std::to_string(o.class_id));
    if (!scene.is_free(o.centroid))
      throw ConfigError("scene '" + scene.id + "': object " + std::to_string(o.id) +
                        " centroid is not in free space");
  }
}

void validate_episode(const Scene& scene, const EpisodeSpec& spec, const WorldConfig& world) {
  if (spec.max_steps <= 0) throw ConfigError("max_steps must be positive");
  if (!(spec.success_radius > 0.0)) throw ConfigError("success_radius must be positive");
  if (scene.clearance(spec.start_pose.position()) < world.agent_radius)
    throw ConfigError("start pose is not in free space");
  if (scene.instances_of(spec.goal_class).empty())
    throw ConfigError("scene '" + scene.id + "' has no instance of goal class " +
                      std::to_string(spec.goal_class));
}

double ray_bearing(int r, const SensorConfig& cfg) {
  return -0.5 * cfg.fov + cfg.fov * static_cast<double>(r) / static_cast<double>(cfg.num_rays);
}

double cast_ray(const Scene& scene, Vec2 origin, double heading, double max_range) {
  const Vec2 dir{std::cos(heading), std::sin(heading)};
  double d = ray_exit_distance(origin, dir, scene.bounds());
  for (const Rect& w : scene.walls) d = std::min(d, ray_rect_distance(origin, dir, w));
  return std::clamp(d, kMinRange, max_range);
}

Pose step(const Scene& scene, const Pose& pose, Action action, const WorldConfig& world) {
  switch (action) {
    case Action::TurnLeft: return make_pose(pose.x, pose.y, pose.theta + world.turn_angle);
    case Action::TurnRight: return make_pose(pose.x, pose.y, pose.theta - world.turn_angle);
    case Action::Stop: throw std::invalid_argument("step: Stop is not a motion");
    case Action::MoveForward: break;
  }
  const Vec2 from = pose.position();
  const Vec2 to = from + Vec2{std::cos(pose.theta), std::sin(pose.theta)} * world.forward_step;
  const double r = world.agent_radius;
  // Bounds are convex, so checking the endpoint covers the whole sweep.
  if (to.x < r || to.y < r || to.x > scene.width - r || to.y > scene.height - r) return pose;
  for (const Rect& w : scene.walls)
    if (segment_rect_distance(from, to, w) < r) return pose;
  return {to.x, to.y, pose.theta};
}

namespace {

struct ObjectSighting {
  const ObjectInstance* object;
  double range;
  double bearing;
};

std::optional<ObjectSighting> sight(const Scene& scene, const Pose& pose, const ObjectInstance& o,
                                    const SensorConfig& cfg) {
  const Vec2 d = o.centroid - pose.position();
  const double range = norm(d);
  if (range > cfg.max_range || range <= 0.0) return std::nullopt;
  const double bearing = normalize_angle(std::atan2(d.y, d.x) - pose.theta);
  if (std::abs(bearing) > 0.5 * cfg.fov) return std::nullopt;
  if (cast_ray(scene, pose.position(), pose.theta + bearing, cfg.max_range) < range) return std::nullopt;
  return ObjectSighting{&o, range, bearing};
}

BoundingBox disc_bbox(double range, double bearing, double radius, const SensorConfig& cfg) {
  const double half = range > radius ? std::asin(radius / range) : 0.5 * cfg.fov;
  BoundingBox b;
  b.angle_min = std::max(bearing - half, -0.5 * cfg.fov);
  b.angle_max = std::min(bearing + half, 0.5 * cfg.fov);
  if (!(b.angle_min < b.angle_max)) {
    b.angle_min = std::max(-0.5 * cfg.fov, bearing - 1e-6);
    b.angle_max = std::min(0.5 * cfg.fov, bearing + 1e-6);
  }
  b.range_min = std::max(range - radius, kMinRange);
  b.range_max = std::min(range + radius, cfg.max_range);
  return b;
}

}  // namespace

std::vector<int> visible_objects(const Scene& scene, const Pose& pose, const SensorConfig& cfg) {
  std::vector<int> ids;
  for (const auto& o : scene.objects)
    if (sight(scene, pose, o, cfg)) ids.push_back(o.id);
  return ids;
}

SensorFrame sense(const Scene& scene, const Pose& pose, const Pose& start_pose,
                  std::uint64_t episode_id, int step_index, const SensorConfig& cfg) {
  SensorFrame frame;
  frame.pose = relative_pose(start_pose, pose);
  frame.view = {scene.seed, pose,
                hash_key({scene.seed, episode_id, as_key(step_index), 0xFEA7ULL})};

  frame.depth.resize(static_cast<std::size_t>(cfg.num_rays));
  for (int r = 0; r < cfg.num_rays; ++r)
    frame.depth[static_cast<std::size_t>(r)] =
        cast_ray(scene, pose.position(), pose.theta + ray_bearing(r, cfg), cfg.max_range);

  KeyedRng rng{scene.seed, episode_id, as_key(step_index), kSenseStream};
  std::normal_distribution<double> range_noise(0.0, 1.0);

  for (const auto& o : scene.objects) {
    // One draw per object regardless of visibility keeps the stream aligned
    // across poses.
    const double u_det = rng.uniform();
    const double noise = range_noise(rng);
    const auto s = sight(scene, pose, o, cfg);
    if (!s || u_det >= cfg.p_det) continue;
    Detection det;
    det.class_id = o.class_id;
    det.centroid_bearing = s->bearing;
    det.centroid_range = std::clamp(s->range + cfg.sigma_pos * noise, kMinRange, cfg.max_range);
    det.bbox = disc_bbox(s->range, s->bearing, o.radius, cfg);
    det.object_id = o.id;
    frame.detections.push_back(det);
  }

  if (rng.uniform() < cfg.p_fp) {
    Detection det;
    det.is_phantom = true;
    det.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(scene.num_classes)));
    det.centroid_bearing = rng.uniform(-0.5 * cfg.fov, 0.5 * cfg.fov);
    const double free_range = cast_ray(scene, pose.position(), pose.theta + det.centroid_bearing,
                                       cfg.max_range);
    // Area-uniform over the visible free wedge along that bearing.
    det.centroid_range = std::clamp(free_range * std::sqrt(rng.uniform()), 0.05, cfg.max_range);
    det.bbox = disc_bbox(det.centroid_range, det.centroid_bearing, cfg.phantom_radius, cfg);
    frame.detections.push_back(det);
  }
  return frame;
}

namespace {

using nlohmann::json;

json scene_json(const Scene& s) {
  json j;
  j["id"] = s.id;
  j["bounds"] = {{"width", s.width}, {"height", s.height}};
  j["num_classes"] = s.num_classes;
  j["seed"] = s.seed;
  j["walls"] = json::array();
  for (const Rect& w : s.walls)
    j["walls"].push_back({{"x_min", w.x_min}, {"y_min", w.y_min}, {"x_max", w.x_max}, {"y_max", w.y_max}});
  j["objects"] = json::array();
  for (const auto& o : s.objects)
    j["objects"].push_back({{"id", o.id}, {"class_id", o.class_id}, {"x", o.centroid.x},
                            {"y", o.centroid.y}, {"radius", o.radius}});
  return j;
}

}  // namespace

std::string scene_to_json(const Scene& scene) { return scene_json(scene).dump(2) + "\n"; }

Scene scene_from_json(const std::string& text) {
  Scene s;
  try {
    const json j = json::parse(text);
    s.id = j.at("id").get<std::string>();
    s.width = j.at("bounds").at("width").get<double>();
    s.height = j.at("bounds").at("height").get<double>();
    s.num_classes = j.value("num_classes", 8);
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& w : j.at("walls"))
      s.walls.push_back({w.at("x_min").get<double>(), w.at("y_min").get<double>(),
                         w.at("x_max").get<double>(), w.at("y_max").get<double>()});
    for (const auto& o : j.at("objects"))
      s.objects.push_back({o.at("id").get<int>(), o.at("class_id").get<int>(),
                           {o.at("x").get<double>(), o.at("y").get<double>()},
                           o.at("radius").get<double>()});
  } catch (const json::exception& e) {
    throw FormatError(std::string("scene json: ") + e.what());
  }
  validate_scene(s);
  return s;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open scene file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_json(ss.str());
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write scene file " + path.string());
  out << scene_to_json(scene);
}

}  // namespace absnav
