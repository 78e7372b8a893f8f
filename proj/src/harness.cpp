#include "absnav/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "absnav/errors.hpp"
#include "absnav/metrics.hpp"
#include "absnav/rng.hpp"

namespace absnav {
namespace {

constexpr std::uint64_t kSceneStream = 0x5CE7EULL;
constexpr std::uint64_t kEpisodeStream = 0xE915ULL;
constexpr std::uint64_t kPreStream = 0x97E0ULL;

std::uint64_t string_key(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

double snap(double v, double q) { return std::round(v / q) * q; }

double rect_gap(const Rect& a, const Rect& b) {
  const double dx = std::max({0.0, a.x_min - b.x_max, b.x_min - a.x_max});
  const double dy = std::max({0.0, a.y_min - b.y_max, b.y_min - a.y_max});
  return std::hypot(dx, dy);
}

struct SceneBuilder {
  const SceneGenConfig& cfg;
  KeyedRng& rng;
  std::vector<Rect> walls;
  std::vector<Vec2> doors;

  bool blocks_door(const Rect& region, bool vertical, double pos) const {
    const double clear = 0.5 * cfg.door_width + cfg.wall_thickness + 0.3;
    for (const Vec2 d : doors) {
      if (vertical) {
        const bool on_edge = std::abs(d.y - region.y_min) < 0.2 || std::abs(d.y - region.y_max) < 0.2;
        if (on_edge && std::abs(d.x - pos) < clear) return true;
      } else {
        const bool on_edge = std::abs(d.x - region.x_min) < 0.2 || std::abs(d.x - region.x_max) < 0.2;
        if (on_edge && std::abs(d.y - pos) < clear) return true;
      }
    }
    return false;
  }

  void split(const Rect& r, int depth) {
    const bool can_v = r.width() >= 2.0 * cfg.min_room;
    const bool can_h = r.height() >= 2.0 * cfg.min_room;
    if (!can_v && !can_h) return;
    if (depth >= 2 && rng.uniform() < 0.3) return;
    const bool vertical = can_v && (!can_h || r.width() > r.height() || (r.width() == r.height() && rng.uniform() < 0.5));
    const double lo = vertical ? r.x_min : r.y_min;
    const double span = vertical ? r.width() : r.height();
    std::optional<double> pos;
    for (int tries = 0; tries < 20 && !pos; ++tries) {
      const double p = snap(lo + cfg.min_room + rng.uniform() * (span - 2.0 * cfg.min_room), 0.05);
      if (!blocks_door(r, vertical, p)) pos = p;
    }
    if (!pos) return;

    const double a0 = vertical ? r.y_min : r.x_min;
    const double a1 = vertical ? r.y_max : r.x_max;
    const double margin = 0.3 + 0.5 * cfg.door_width;
    const double door = snap(a0 + margin + rng.uniform() * std::max(0.0, (a1 - a0) - 2.0 * margin), 0.05);
    const double t = 0.5 * cfg.wall_thickness;
    const double g0 = door - 0.5 * cfg.door_width;
    const double g1 = door + 0.5 * cfg.door_width;
    if (vertical) {
      if (g0 > a0) walls.push_back({*pos - t, a0, *pos + t, g0});
      if (a1 > g1) walls.push_back({*pos - t, g1, *pos + t, a1});
      doors.push_back({*pos, door});
      split({r.x_min, r.y_min, *pos, r.y_max}, depth + 1);
      split({*pos, r.y_min, r.x_max, r.y_max}, depth + 1);
    } else {
      if (g0 > a0) walls.push_back({a0, *pos - t, g0, *pos + t});
      if (a1 > g1) walls.push_back({g1, *pos - t, a1, *pos + t});
      doors.push_back({door, *pos});
      split({r.x_min, r.y_min, r.x_max, *pos}, depth + 1);
      split({r.x_min, *pos, r.x_max, r.y_max}, depth + 1);
    }
  }

  bool add_furniture(double width, double height) {
    const double w = snap(rng.uniform(0.4, 1.2), 0.05);
    const double h = snap(rng.uniform(0.4, 1.2), 0.05);
    const double x = snap(rng.uniform(0.7, width - 0.7 - w), 0.05);
    const double y = snap(rng.uniform(0.7, height - 0.7 - h), 0.05);
    const Rect f{x, y, x + w, y + h};
    for (const Rect& other : walls)
      if (rect_gap(f, other) < 0.7) return false;
    for (const Vec2 d : doors)
      if (point_rect_distance(d, f) < 1.0) return false;
    walls.push_back(f);
    return true;
  }
};

std::vector<int> label_components(const TraversabilityGrid& g, int& largest) {
  std::vector<int> label(g.cells.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    if (label[i] >= 0 || g.cells[i] != Passability::Open) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t n = 0;
    stack.push_back(i);
    label[i] = id;
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      ++n;
      const int x = static_cast<int>(c % static_cast<std::size_t>(g.width));
      const int y = static_cast<int>(c / static_cast<std::size_t>(g.width));
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= g.width || ny[k] >= g.height) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * static_cast<std::size_t>(g.width) + static_cast<std::size_t>(nx[k]);
        if (label[j] >= 0 || g.cells[j] != Passability::Open) continue;
        label[j] = id;
        stack.push_back(j);
      }
    }
    sizes.push_back(n);
  }
  largest = sizes.empty() ? -1 : static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  return label;
}

}  // namespace

Scene generate_scene(const std::string& id, std::uint64_t seed, const SceneGenConfig& cfg) {
  KeyedRng rng{seed, kSceneStream};
  for (int attempt = 0; attempt < 200; ++attempt) {
    Scene s;
    s.id = id;
    s.width = cfg.width;
    s.height = cfg.height;
    s.num_classes = cfg.num_classes;
    s.seed = hash_key({seed, 0x1A7E47ULL});

    SceneBuilder b{cfg, rng, {}, {}};
    b.split(s.bounds(), 0);
    if (static_cast<int>(b.walls.size()) > cfg.max_walls) continue;
    const int target = cfg.min_walls + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_walls - cfg.min_walls + 1)));
    for (int tries = 0; tries < 2000 && static_cast<int>(b.walls.size()) < target; ++tries) b.add_furniture(s.width, s.height);
    if (static_cast<int>(b.walls.size()) < cfg.min_walls) continue;
    s.walls = b.walls;

    GroundTruth gt(s, WorldConfig{});
    const int n_obj = cfg.min_objects + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
    for (int tries = 0; tries < 5000 && static_cast<int>(s.objects.size()) < n_obj; ++tries) {
      const Vec2 p{snap(rng.uniform(0.5, s.width - 0.5), 0.01), snap(rng.uniform(0.5, s.height - 0.5), 0.01)};
      if (s.clearance(p) < cfg.object_radius + 0.1) continue;
      if (!gt.in_main_component(p)) continue;
      const bool crowded = std::any_of(s.objects.begin(), s.objects.end(),
                                       [&](const ObjectInstance& o) { return distance(o.centroid, p) < cfg.object_spacing; });
      if (crowded) continue;
      ObjectInstance o;
      o.id = static_cast<int>(s.objects.size());
      o.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_classes)));
      o.centroid = p;
      o.radius = cfg.object_radius;
      s.objects.push_back(o);
    }
    if (static_cast<int>(s.objects.size()) < n_obj) continue;
    validate_scene(s);
    return s;
  }
  throw ConfigError("scene generator could not satisfy the wall/object constraints");
}

std::vector<Scene> generate_scenes(int count, std::uint64_t seed, const SceneGenConfig& cfg) {
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "scene_%02d", i);
    out.push_back(generate_scene(id, hash_key({seed, as_key(i)}), cfg));
  }
  return out;
}

OccupancyMap ground_truth_map(const Scene& scene, double resolution) {
  OccupancyMap map(resolution);
  const int nx = static_cast<int>(std::ceil(scene.width / resolution));
  const int ny = static_cast<int>(std::ceil(scene.height / resolution));
  map.ensure_contains({-1, -1}, {nx, ny}, 0);
  for (int y = -1; y <= ny; ++y)
    for (int x = -1; x <= nx; ++x) {
      const Vec2 c = map.center_of({x, y});
      map.raise({x, y}, scene.is_free(c) ? Cell::Free : Cell::Obstacle);
    }
  return map;
}

GroundTruth::GroundTruth(const Scene& scene, const WorldConfig& world, double resolution)
    : scene_(&scene), map_(ground_truth_map(scene, resolution)) {
  grid_ = build_traversability(map_, false, world.agent_radius);
  component_ = label_components(grid_, main_component_);
  std::set<int> classes;
  for (const auto& o : scene.objects) classes.insert(o.class_id);
  for (int c : classes) {
    std::vector<CellIndex> sources;
    for (const auto* o : scene.instances_of(c))
      if (const auto cell = cell_near(o->centroid)) sources.push_back(*cell);
    class_fields_.emplace(c, fmm_solve(grid_, sources));
  }
}

std::optional<CellIndex> GroundTruth::cell_near(Vec2 p) const {
  return snap_to_open(grid_, map_.cell_of(p), 0.5);
}

double GroundTruth::to_class(Vec2 p, int class_id) {
  const auto it = class_fields_.find(class_id);
  if (it == class_fields_.end()) return kUnreachable;
  const auto c = cell_near(p);
  return c ? it->second.at(*c) : kUnreachable;
}

double GroundTruth::between(Vec2 a, Vec2 b) const {
  const auto ca = cell_near(a);
  const auto cb = cell_near(b);
  if (!ca || !cb) return kUnreachable;
  const CellIndex src[1] = {*cb};
  FmmOptions o;
  o.stop_at = *ca;
  o.stop_slack = 0.0;
  return fmm_solve(grid_, src, o).at(*ca);
}

bool GroundTruth::in_main_component(Vec2 p) const {
  const CellIndex c = map_.cell_of(p);
  if (!grid_.in_extent(c) || main_component_ < 0) return false;
  return component_[grid_.local(c)] == main_component_;
}

std::vector<EpisodeSpec> sample_episodes(const Scene& scene, int count, std::uint64_t seed, GroundTruth& gt,
                                         const EpisodeSamplerConfig& cfg) {
  KeyedRng rng{seed, string_key(scene.id), kEpisodeStream};
  std::set<int> present;
  for (const auto& o : scene.objects) present.insert(o.class_id);
  const std::vector<int> classes(present.begin(), present.end());
  if (classes.empty()) throw ConfigError("scene '" + scene.id + "' has no objects");
  std::vector<EpisodeSpec> out;
  for (int k = 0; k < count; ++k) {
    for (int tries = 0;; ++tries) {
      if (tries > 10000) throw ConfigError("cannot sample episodes in scene '" + scene.id + "'");
      const Vec2 p{rng.uniform(0.0, scene.width), rng.uniform(0.0, scene.height)};
      const double theta = normalize_angle(deg_to_rad(30.0) * static_cast<double>(rng.below(12)));
      const int goal = classes[rng.below(classes.size())];
      if (scene.clearance(p) < cfg.start_clearance || !gt.in_main_component(p)) continue;
      const double l = gt.to_class(p, goal);
      if (!std::isfinite(l) || l <= cfg.min_shortest_path) continue;
      if (scene.distance_to_class(p, goal) < cfg.success_radius) continue;
      EpisodeSpec e;
      e.scene_id = scene.id;
      e.start_pose = {p.x, p.y, theta};
      e.goal_class = goal;
      e.max_steps = cfg.max_steps;
      e.success_radius = cfg.success_radius;
      e.episode_id = hash_key({seed, string_key(scene.id), as_key(k)});
      out.push_back(e);
      break;
    }
  }
  return out;
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::HardPre: return "hard-pre";
    case Variant::SoftPre: return "soft-pre";
    case Variant::SoftIncr: return "soft-incr";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::Baseline;
  if (s == "hard-pre") return Variant::HardPre;
  if (s == "soft-pre") return Variant::SoftPre;
  if (s == "soft-incr") return Variant::SoftIncr;
  throw ConfigError("unknown variant '" + s + "'");
}

namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void read_angle_deg(const json& j, const char* key, double& radians) {
  if (j.contains(key)) radians = deg_to_rad(j.at(key).get<double>());
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  const ControllerConfig& c = cfg.controller;
  json j;
  j["scene_count"] = cfg.scene_count;
  j["episodes_per_scene"] = cfg.episodes_per_scene;
  j["pre_exploration_steps"] = cfg.pre_exploration_steps;
  j["ground_truth_resolution"] = cfg.ground_truth_resolution;
  j["controller"] = {{"match_threshold", c.match_threshold},
                     {"exploration_goal_period", c.exploration_goal_period},
                     {"soft_kappa", c.soft_kappa},
                     {"soft_min_radius", c.soft_min_radius},
                     {"stop_radius", c.stop_radius},
                     {"dedup_threshold", c.dedup_threshold},
                     {"cluster_radius", c.cluster_radius},
                     {"top_k", c.top_k},
                     {"min_candidate_views", c.min_candidate_views},
                     {"sweep_turns", c.sweep_turns},
                     {"goal_reached_radius", c.goal_reached_radius},
                     {"replan_goal_shift", c.replan_goal_shift},
                     {"replan_slack", c.replan_slack},
                     {"mark_collisions", c.mark_collisions},
                     {"map_resolution", c.map_resolution}};
  j["features"] = {{"dim", c.features.dim},
                   {"cell_size", c.features.cell_size},
                   {"bin_width_deg", rad_to_deg(c.features.bin_width)},
                   {"kernel_half_width", c.features.kernel_half_width},
                   {"sigma", c.features.sigma}};
  j["sensor"] = {{"num_rays", c.sensor.num_rays},
                 {"fov_deg", rad_to_deg(c.sensor.fov)},
                 {"max_range", c.sensor.max_range},
                 {"p_det", c.sensor.p_det},
                 {"p_fp", c.sensor.p_fp},
                 {"sigma_pos", c.sensor.sigma_pos},
                 {"phantom_radius", c.sensor.phantom_radius}};
  j["world"] = {{"agent_radius", c.world.agent_radius},
                {"forward_step", c.world.forward_step},
                {"turn_angle_deg", rad_to_deg(c.world.turn_angle)}};
  j["planner"] = {{"inflation_radius", c.planner.inflation_radius},
                  {"snap_radius", c.planner.snap_radius},
                  {"lookahead_cells", c.planner.lookahead_cells},
                  {"heading_deadband_deg", rad_to_deg(c.planner.heading_deadband)},
                  {"min_frontier_size", c.planner.min_frontier_size},
                  {"exploration_exclusion_radius", c.planner.exploration_exclusion_radius},
                  {"exploration_min_distance", c.planner.exploration_min_distance}};
  j["scenes"] = {{"width", cfg.scenes.width},
                 {"height", cfg.scenes.height},
                 {"min_walls", cfg.scenes.min_walls},
                 {"max_walls", cfg.scenes.max_walls},
                 {"min_objects", cfg.scenes.min_objects},
                 {"max_objects", cfg.scenes.max_objects},
                 {"num_classes", cfg.scenes.num_classes},
                 {"wall_thickness", cfg.scenes.wall_thickness},
                 {"door_width", cfg.scenes.door_width},
                 {"min_room", cfg.scenes.min_room},
                 {"object_radius", cfg.scenes.object_radius},
                 {"object_spacing", cfg.scenes.object_spacing}};
  j["episodes"] = {{"max_steps", cfg.episodes.max_steps},
                   {"success_radius", cfg.episodes.success_radius},
                   {"min_shortest_path", cfg.episodes.min_shortest_path},
                   {"start_clearance", cfg.episodes.start_clearance}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig cfg) {
  try {
    read(j, "scene_count", cfg.scene_count);
    read(j, "episodes_per_scene", cfg.episodes_per_scene);
    read(j, "pre_exploration_steps", cfg.pre_exploration_steps);
    read(j, "ground_truth_resolution", cfg.ground_truth_resolution);
    ControllerConfig& c = cfg.controller;
    if (j.contains("controller")) {
      const json& k = j.at("controller");
      read(k, "match_threshold", c.match_threshold);
      read(k, "exploration_goal_period", c.exploration_goal_period);
      read(k, "soft_kappa", c.soft_kappa);
      read(k, "soft_min_radius", c.soft_min_radius);
      read(k, "stop_radius", c.stop_radius);
      read(k, "dedup_threshold", c.dedup_threshold);
      read(k, "cluster_radius", c.cluster_radius);
      read(k, "top_k", c.top_k);
      read(k, "min_candidate_views", c.min_candidate_views);
      read(k, "sweep_turns", c.sweep_turns);
      read(k, "goal_reached_radius", c.goal_reached_radius);
      read(k, "replan_goal_shift", c.replan_goal_shift);
      read(k, "replan_slack", c.replan_slack);
      read(k, "mark_collisions", c.mark_collisions);
      read(k, "map_resolution", c.map_resolution);
    }
    if (j.contains("features")) {
      const json& k = j.at("features");
      read(k, "dim", c.features.dim);
      read(k, "cell_size", c.features.cell_size);
      read_angle_deg(k, "bin_width_deg", c.features.bin_width);
      read(k, "kernel_half_width", c.features.kernel_half_width);
      read(k, "sigma", c.features.sigma);
    }
    if (j.contains("sensor")) {
      const json& k = j.at("sensor");
      read(k, "num_rays", c.sensor.num_rays);
      read_angle_deg(k, "fov_deg", c.sensor.fov);
      read(k, "max_range", c.sensor.max_range);
      read(k, "p_det", c.sensor.p_det);
      read(k, "p_fp", c.sensor.p_fp);
      read(k, "sigma_pos", c.sensor.sigma_pos);
      read(k, "phantom_radius", c.sensor.phantom_radius);
    }
    if (j.contains("world")) {
      const json& k = j.at("world");
      read(k, "agent_radius", c.world.agent_radius);
      read(k, "forward_step", c.world.forward_step);
      read_angle_deg(k, "turn_angle_deg", c.world.turn_angle);
    }
    if (j.contains("planner")) {
      const json& k = j.at("planner");
      read(k, "inflation_radius", c.planner.inflation_radius);
      read(k, "snap_radius", c.planner.snap_radius);
      read(k, "lookahead_cells", c.planner.lookahead_cells);
      read_angle_deg(k, "heading_deadband_deg", c.planner.heading_deadband);
      read(k, "min_frontier_size", c.planner.min_frontier_size);
      read(k, "exploration_exclusion_radius", c.planner.exploration_exclusion_radius);
      read(k, "exploration_min_distance", c.planner.exploration_min_distance);
    }
    if (j.contains("scenes")) {
      const json& k = j.at("scenes");
      read(k, "width", cfg.scenes.width);
      read(k, "height", cfg.scenes.height);
      read(k, "min_walls", cfg.scenes.min_walls);
      read(k, "max_walls", cfg.scenes.max_walls);
      read(k, "min_objects", cfg.scenes.min_objects);
      read(k, "max_objects", cfg.scenes.max_objects);
      read(k, "num_classes", cfg.scenes.num_classes);
      read(k, "wall_thickness", cfg.scenes.wall_thickness);
      read(k, "door_width", cfg.scenes.door_width);
      read(k, "min_room", cfg.scenes.min_room);
      read(k, "object_radius", cfg.scenes.object_radius);
      read(k, "object_spacing", cfg.scenes.object_spacing);
    }
    if (j.contains("episodes")) {
      const json& k = j.at("episodes");
      read(k, "max_steps", cfg.episodes.max_steps);
      read(k, "success_radius", cfg.episodes.success_radius);
      read(k, "min_shortest_path", cfg.episodes.min_shortest_path);
      read(k, "start_clearance", cfg.episodes.start_clearance);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_experiment_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void validate_experiment_config(const ExperimentConfig& cfg) {
  validate_controller_config(cfg.controller);
  if (!(cfg.controller.stop_radius < cfg.episodes.success_radius))
    throw ConfigError("stop_radius must be below success_radius");
  if (cfg.scene_count <= 0 || cfg.episodes_per_scene <= 0) throw ConfigError("scene and episode counts must be positive");
  if (cfg.pre_exploration_steps < 0) throw ConfigError("pre_exploration_steps must be non-negative");
  if (cfg.episodes.max_steps <= 0) throw ConfigError("max_steps must be positive");
  if (cfg.scenes.min_walls > cfg.scenes.max_walls || cfg.scenes.min_objects > cfg.scenes.max_objects)
    throw ConfigError("scene generator ranges are inverted");
  if (cfg.controller.sensor.num_rays <= 0 || !(cfg.controller.sensor.max_range > 0.0))
    throw ConfigError("sensor needs rays and a positive range");
  if (cfg.controller.sensor.p_det < 0.0 || cfg.controller.sensor.p_det > 1.0 || cfg.controller.sensor.p_fp < 0.0 ||
      cfg.controller.sensor.p_fp > 1.0)
    throw ConfigError("sensor probabilities must lie in [0, 1]");
}

Suite make_suite(std::vector<Scene> scenes, std::uint64_t seed, const ExperimentConfig& cfg) {
  Suite s;
  s.seed = seed;
  s.scenes = std::move(scenes);
  std::set<std::string> ids;
  for (const auto& sc : s.scenes)
    if (!ids.insert(sc.id).second) throw ConfigError("duplicate scene id '" + sc.id + "'");
  // Ground truth holds a pointer to its scene; the vector is final from here on.
  for (const auto& sc : s.scenes) {
    s.truth.push_back(std::make_unique<GroundTruth>(sc, cfg.controller.world, cfg.ground_truth_resolution));
    s.episodes.push_back(sample_episodes(sc, cfg.episodes_per_scene, seed, *s.truth.back(), cfg.episodes));
  }
  return s;
}

int default_threads() {
  if (const char* env = std::getenv("ABSNAV_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ModelStore pre_explore(const Suite& suite, const ExperimentConfig& cfg, int threads) {
  std::vector<AbstractModel> models(suite.scenes.size());
  parallel_for(suite.scenes.size(), threads, [&](std::size_t i) {
    const Scene& scene = suite.scenes[i];
    ControllerConfig cc = cfg.controller;
    cc.mode = ControllerMode::MemoryLess;
    cc.incremental = false;
    NavigationController agent(cc, static_cast<ModelStore*>(nullptr));
    KeyedRng rng{suite.seed, string_key(scene.id), kPreStream};
    Pose pose{};
    for (int tries = 0;; ++tries) {
      const Vec2 p{rng.uniform(0.0, scene.width), rng.uniform(0.0, scene.height)};
      if (scene.clearance(p) >= cfg.episodes.start_clearance && suite.truth[i]->in_main_component(p)) {
        pose = {p.x, p.y, normalize_angle(deg_to_rad(30.0) * static_cast<double>(rng.below(12)))};
        break;
      }
      if (tries > 10000) throw ConfigError("cannot place the pre-exploration start");
    }
    const Pose start = pose;
    const std::uint64_t episode_id = hash_key({suite.seed, string_key(scene.id), kPreStream});
    agent.begin_episode(-1, cfg.pre_exploration_steps);
    for (int t = 0; t < cfg.pre_exploration_steps; ++t) {
      SensorFrame frame = sense(scene, pose, start, episode_id, t, cc.sensor);
      for (Detection& d : frame.detections) {
        d.is_phantom = false;
        d.object_id = -1;
      }
      const Action a = agent.decide(frame);
      if (a == Action::Stop) break;
      pose = step(scene, pose, a, cc.world);
    }
    models[i] = agent.take_model();
  });
  ModelStore store;
  for (auto& m : models) store.add(std::move(m));
  return store;
}

std::vector<EpisodeRecord> VariantRun::flat() const {
  std::vector<EpisodeRecord> out;
  for (const auto& scene : records) out.insert(out.end(), scene.begin(), scene.end());
  return out;
}

namespace {

ControllerConfig variant_controller(Variant v, const ControllerConfig& base) {
  ControllerConfig c = base;
  c.incremental = false;
  switch (v) {
    case Variant::Baseline: c.mode = ControllerMode::MemoryLess; break;
    case Variant::HardPre: c.mode = ControllerMode::HardReuse; break;
    case Variant::SoftPre: c.mode = ControllerMode::SoftReuse; break;
    case Variant::SoftIncr:
      c.mode = ControllerMode::SoftReuse;
      c.incremental = true;
      break;
  }
  return c;
}

void annotate(EpisodeRecord& r, const Scene& scene, GroundTruth& gt) {
  r.shortest_path = gt.to_class(r.spec.start_pose.position(), r.spec.goal_class);
  r.d_init = r.shortest_path;
  r.d_T = gt.to_class(r.final_pose.position(), r.spec.goal_class);
  if (!r.success && r.relocated) r.failure_class = classify_failure(r, scene);
}

}  // namespace

VariantRun run_variant(Variant v, const Suite& suite, const ExperimentConfig& cfg, const ModelStore* pre_store,
                       int threads) {
  if ((v == Variant::HardPre || v == Variant::SoftPre) && !pre_store)
    throw ConfigError(std::string(to_string(v)) + " needs a pre-explored store");
  if (suite.episodes.size() != suite.scenes.size()) throw ConfigError("suite scenes and episode lists differ");
  const auto t0 = std::chrono::steady_clock::now();
  VariantRun run;
  run.variant = v;
  run.seed = suite.seed;
  run.records.resize(suite.scenes.size());
  const ControllerConfig cc = variant_controller(v, cfg.controller);
  RunConfig rc{cc.world, cc.sensor};

  if (v == Variant::SoftIncr) {
    parallel_for(suite.scenes.size(), threads, [&](std::size_t s) {
      ModelStore store;
      NavigationController agent(cc, &store);
      for (const EpisodeSpec& spec : suite.episodes[s]) {
        EpisodeRecord r = run_episode(suite.scenes[s], spec, agent, rc);
        annotate(r, suite.scenes[s], *suite.truth[s]);
        run.records[s].push_back(std::move(r));
      }
    });
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t s = 0; s < suite.scenes.size(); ++s) {
      run.records[s].resize(suite.episodes[s].size());
      for (std::size_t k = 0; k < suite.episodes[s].size(); ++k) jobs.emplace_back(s, k);
    }
    const ModelStore* memory = v == Variant::Baseline ? nullptr : pre_store;
    parallel_for(jobs.size(), threads, [&](std::size_t j) {
      const auto [s, k] = jobs[j];
      NavigationController agent(cc, memory);
      EpisodeRecord r = run_episode(suite.scenes[s], suite.episodes[s][k], agent, rc);
      annotate(r, suite.scenes[s], *suite.truth[s]);
      run.records[s][k] = std::move(r);
    });
  }
  for (const auto& scene : run.records)
    for (const auto& r : scene) run.steps += r.trace.size();
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

Summary summarize(const std::vector<const VariantRun*>& runs) {
  Summary s;
  std::vector<EpisodeRecord> all;
  std::vector<std::vector<double>> per_env;
  for (const VariantRun* run : runs)
    for (const auto& scene : run->records) {
      all.insert(all.end(), scene.begin(), scene.end());
      std::vector<double> seq;
      for (const auto& r : scene) seq.push_back(r.success ? 1.0 : 0.0);
      per_env.push_back(std::move(seq));
    }
  s.episodes = all.size();
  if (all.empty()) return s;
  s.success = success_rate(all);
  s.spl = spl(all);
  s.soft_spl = soft_spl(all);
  s.dts = dts(all);
  s.relocation_rate = relocation_rate(all);
  for (const auto& r : all)
    if (r.failure_class) ++s.failures[to_string(*r.failure_class)];
  s.moving_avg_success = moving_avg_success(per_env, 5);
  return s;
}

nlohmann::json summary_to_json(const Summary& s) {
  return {{"episodes", s.episodes},         {"success", s.success},
          {"spl", s.spl},                   {"soft_spl", s.soft_spl},
          {"dts", s.dts},                   {"relocation_rate", s.relocation_rate},
          {"failures", s.failures},         {"moving_avg_success", s.moving_avg_success}};
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string episodes_csv_header() {
  return "variant,seed,scene_id,episode_index,episode_id,goal_class,start_x,start_y,start_theta,success,stopped,"
         "agent_fault,actions,path_length,shortest_path,d_init,d_T,final_distance,relocated,failure_class\n";
}

std::string episodes_csv(const VariantRun& run, const Suite& suite) {
  std::ostringstream out;
  out << episodes_csv_header();
  for (std::size_t s = 0; s < run.records.size(); ++s)
    for (std::size_t k = 0; k < run.records[s].size(); ++k) {
      const EpisodeRecord& r = run.records[s][k];
      out << to_string(run.variant) << ',' << run.seed << ',' << suite.scenes[s].id << ',' << k << ','
          << r.spec.episode_id << ',' << r.spec.goal_class << ',' << num(r.spec.start_pose.x) << ','
          << num(r.spec.start_pose.y) << ',' << num(r.spec.start_pose.theta) << ',' << (r.success ? 1 : 0) << ','
          << (r.stopped ? 1 : 0) << ',' << (r.agent_fault ? 1 : 0) << ',' << r.actions << ',' << num(r.path_length)
          << ',' << num(r.shortest_path) << ',' << num(r.d_init) << ',' << num(r.d_T) << ','
          << num(r.final_distance) << ',' << (r.relocated ? 1 : 0) << ','
          << (r.failure_class ? to_string(*r.failure_class) : "") << '\n';
    }
  return out.str();
}

std::string traces_jsonl(const VariantRun& run) {
  std::ostringstream out;
  for (const auto& scene : run.records)
    for (const auto& r : scene) write_trace_jsonl(r, out);
  return out.str();
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::string svg_success_curve(const std::map<std::string, std::vector<double>>& series) {
  const double W = 640, H = 400, L = 60, R = 150, T = 30, B = 50;
  std::size_t len = 1;
  for (const auto& [name, v] : series) len = std::max(len, v.size());
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << L << "\" y=\"20\" font-size=\"14\">Moving-average success (window 5)</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = H - B - (H - B - T) * k / 4.0;
    o << "<text x=\"" << L - 35 << "\" y=\"" << y + 4 << "\" font-size=\"11\">" << num(k / 4.0) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" font-size=\"12\">episode index</text>\n";
  int c = 0;
  for (const auto& [name, v] : series) {
    o << "<polyline fill=\"none\" stroke=\"" << kPalette[c % 8] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x = L + (W - L - R) * (len > 1 ? static_cast<double>(i) / static_cast<double>(len - 1) : 0.0);
      const double y = H - B - (H - B - T) * std::clamp(v[i], 0.0, 1.0);
      o << num(x) << ',' << num(y) << ' ';
    }
    o << "\"/>\n";
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 20 * c + 10 << "\" font-size=\"12\" fill=\"" << kPalette[c % 8]
      << "\">" << name << "</text>\n";
    ++c;
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_failure_bars(const std::map<std::string, std::map<std::string, int>>& failures) {
  static const char* kClasses[] = {"last_mile", "hallucination", "detection", "exploration", "misc"};
  const double W = 640, H = 400, L = 50, B = 60, T = 30;
  int peak = 1;
  for (const auto& [name, h] : failures)
    for (const auto& [cls, n] : h) peak = std::max(peak, n);
  const double group = (W - L - 20) / 5.0;
  const double bar = group / (static_cast<double>(failures.size()) + 1.0);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << L << "\" y=\"20\" font-size=\"14\">Failures of relocated episodes (max " << peak << ")</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - 20 << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int g = 0; g < 5; ++g) {
    o << "<text x=\"" << L + g * group + 4 << "\" y=\"" << H - B + 16 << "\" font-size=\"11\">" << kClasses[g] << "</text>\n";
    int c = 0;
    for (const auto& [name, h] : failures) {
      const auto it = h.find(kClasses[g]);
      const int n = it == h.end() ? 0 : it->second;
      const double bh = (H - B - T) * n / peak;
      o << "<rect x=\"" << num(L + g * group + c * bar + 2) << "\" y=\"" << num(H - B - bh) << "\" width=\"" << num(bar - 2)
        << "\" height=\"" << num(bh) << "\" fill=\"" << kPalette[c % 8] << "\"/>\n";
      ++c;
    }
  }
  int c = 0;
  for (const auto& [name, h] : failures) {
    o << "<text x=\"" << L + 130 * c << "\" y=\"" << H - 15 << "\" font-size=\"12\" fill=\"" << kPalette[c % 8] << "\">"
      << name << "</text>\n";
    ++c;
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_scene_snapshot(const Scene& scene, const std::vector<EpisodeRecord>& records) {
  const double px = 40.0;
  const double W = scene.width * px, H = scene.height * px;
  auto X = [&](double x) { return num(x * px); };
  auto Y = [&](double y) { return num(H - y * px); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\" stroke=\"black\"/>\n";
  for (const Rect& w : scene.walls)
    o << "<rect x=\"" << X(w.x_min) << "\" y=\"" << Y(w.y_max) << "\" width=\"" << num(w.width() * px) << "\" height=\""
      << num(w.height() * px) << "\" fill=\"#444\"/>\n";
  for (const auto& ob : scene.objects)
    o << "<circle cx=\"" << X(ob.centroid.x) << "\" cy=\"" << Y(ob.centroid.y) << "\" r=\"" << num(ob.radius * px)
      << "\" fill=\"" << kPalette[ob.class_id % 8] << "\"/>\n";
  for (const auto& r : records) {
    o << "<polyline fill=\"none\" stroke=\"" << (r.success ? "#2ca02c" : "#d62728")
      << "\" stroke-opacity=\"0.6\" points=\"";
    for (const auto& ev : r.trace) o << X(ev.pose.x) << ',' << Y(ev.pose.y) << ' ';
    o << X(r.final_pose.x) << ',' << Y(r.final_pose.y) << "\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<Scene> load_scenes(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Scene> out;
  for (const auto& f : files) out.push_back(load_scene(f));
  if (out.empty()) throw ConfigError("no scene files in " + dir.string());
  return out;
}

}  // namespace absnav
