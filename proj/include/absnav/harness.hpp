#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "absnav/abstract_model.hpp"
#include "absnav/controller.hpp"
#include "absnav/episode.hpp"
#include "absnav/planning.hpp"
#include "absnav/world.hpp"

namespace absnav {

struct SceneGenConfig {
  double width = 12.0;
  double height = 12.0;
  int min_walls = 15;
  int max_walls = 30;
  int min_objects = 10;
  int max_objects = 20;
  int num_classes = 8;
  double wall_thickness = 0.1;
  double door_width = 1.0;
  /// Regions narrower than twice this are not split further.
  double min_room = 2.4;
  double object_radius = 0.25;
  double object_spacing = 1.2;
};

/// Rooms by recursive splitting with one door per splitting wall, then
/// furniture blocks and objects placed in the connected free space.
Scene generate_scene(const std::string& id, std::uint64_t seed, const SceneGenConfig& cfg = {});
std::vector<Scene> generate_scenes(int count, std::uint64_t seed, const SceneGenConfig& cfg = {});

/// Rasterized scene: Obstacle where a cell center is inside a wall or out of
/// bounds, Free elsewhere.
OccupancyMap ground_truth_map(const Scene& scene, double resolution = 0.05);

/// Geodesic queries on a scene's raster with obstacles grown by the agent
/// radius. Per-class fields are computed once and cached.
class GroundTruth {
 public:
  GroundTruth(const Scene& scene, const WorldConfig& world, double resolution = 0.05);

  /// Geodesic distance from `p` to the nearest instance of `class_id`.
  double to_class(Vec2 p, int class_id);
  double between(Vec2 a, Vec2 b) const;
  /// True if p's cell is reachable from the largest traversable component.
  bool in_main_component(Vec2 p) const;
  const OccupancyMap& map() const { return map_; }
  const TraversabilityGrid& grid() const { return grid_; }

 private:
  std::optional<CellIndex> cell_near(Vec2 p) const;

  const Scene* scene_;
  OccupancyMap map_;
  TraversabilityGrid grid_;
  std::vector<int> component_;
  int main_component_ = -1;
  std::map<int, DistanceField> class_fields_;
};

struct EpisodeSamplerConfig {
  int max_steps = 500;
  double success_radius = 1.0;
  /// Episodes whose start is already this close (geodesic) are resampled.
  double min_shortest_path = 1.0;
  double start_clearance = 0.25;
};

std::vector<EpisodeSpec> sample_episodes(const Scene& scene, int count, std::uint64_t seed, GroundTruth& gt,
                                         const EpisodeSamplerConfig& cfg = {});

enum class Variant { Baseline, HardPre, SoftPre, SoftIncr };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ExperimentConfig {
  ControllerConfig controller;
  SceneGenConfig scenes;
  EpisodeSamplerConfig episodes;
  int scene_count = 8;
  int episodes_per_scene = 20;
  int pre_exploration_steps = 2000;
  double ground_truth_resolution = 0.05;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Every key is optional; missing keys keep the values already in `base`.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Throws ConfigError on inconsistent settings.
void validate_experiment_config(const ExperimentConfig& cfg);

/// Scenes, their ground truth and the paired episode lists for one seed.
struct Suite {
  std::uint64_t seed = 0;
  std::vector<Scene> scenes;
  std::vector<std::unique_ptr<GroundTruth>> truth;
  /// episodes[s] runs in scene s, in order.
  std::vector<std::vector<EpisodeSpec>> episodes;
};

Suite make_suite(std::vector<Scene> scenes, std::uint64_t seed, const ExperimentConfig& cfg);

/// One frozen model per scene from `steps` of exploration-only control.
ModelStore pre_explore(const Suite& suite, const ExperimentConfig& cfg, int threads);

struct VariantRun {
  Variant variant = Variant::Baseline;
  std::uint64_t seed = 0;
  /// records[s][k]: scene s, episode k.
  std::vector<std::vector<EpisodeRecord>> records;
  double seconds = 0.0;
  std::size_t steps = 0;

  std::vector<EpisodeRecord> flat() const;
};

/// Runs every episode of the suite under `v`. HardPre/SoftPre need
/// `pre_store`; SoftIncr grows one store per scene, episodes in order.
VariantRun run_variant(Variant v, const Suite& suite, const ExperimentConfig& cfg, const ModelStore* pre_store,
                       int threads);

struct Summary {
  std::size_t episodes = 0;
  double success = 0.0;
  double spl = 0.0;
  double soft_spl = 0.0;
  double dts = 0.0;
  double relocation_rate = 0.0;
  std::map<std::string, int> failures;
  std::vector<double> moving_avg_success;
};

Summary summarize(const std::vector<const VariantRun*>& runs);
nlohmann::json summary_to_json(const Summary& s);

/// Worker count: ABSNAV_THREADS when set, else the hardware concurrency.
int default_threads();
/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

inline constexpr int kCsvSchemaVersion = 1;
std::string episodes_csv_header();
std::string episodes_csv(const VariantRun& run, const Suite& suite);
std::string traces_jsonl(const VariantRun& run);

/// Plots. All return standalone SVG documents.
std::string svg_success_curve(const std::map<std::string, std::vector<double>>& series);
std::string svg_failure_bars(const std::map<std::string, std::map<std::string, int>>& failures);
std::string svg_scene_snapshot(const Scene& scene, const std::vector<EpisodeRecord>& records);

std::vector<Scene> load_scenes(const std::filesystem::path& dir);

}  // namespace absnav
