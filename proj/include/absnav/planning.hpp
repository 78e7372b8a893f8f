#pragma once

#include <cstdint>
#include <iosfwd>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "absnav/geometry.hpp"
#include "absnav/occupancy.hpp"
#include "absnav/world.hpp"

namespace absnav {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct PlannerConfig {
  /// Obstacles are grown by this much before planning: agent radius plus a
  /// clearance margin for the discrete heading.
  double inflation_radius = 0.2;
  /// A blocked goal is moved to the nearest traversable cell within this.
  double snap_radius = 0.5;
  /// Length of the steepest-descent walk whose end is the steering waypoint.
  int lookahead_cells = 8;
  double heading_deadband = deg_to_rad(15.0);
  std::size_t min_frontier_size = 3;
  /// Exploration goals within this distance of an excluded point are skipped.
  double exploration_exclusion_radius = 1.0;
  /// Exploration goals closer than this to the agent are skipped.
  double exploration_min_distance = 0.5;
};

enum class Passability : std::uint8_t { Open = 0, Inflated = 1, Blocked = 2 };

/// Per-cell traversability over a map's extent. Cells outside the extent are
/// blocked.
struct TraversabilityGrid {
  int min_x = 0;
  int min_y = 0;
  int width = 0;
  int height = 0;
  double resolution = 0.05;
  std::vector<Passability> cells;

  bool in_extent(CellIndex c) const {
    return c.x >= min_x && c.y >= min_y && c.x < min_x + width && c.y < min_y + height;
  }
  std::size_t local(CellIndex c) const {
    return static_cast<std::size_t>(c.y - min_y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(c.x - min_x);
  }
  Passability at(CellIndex c) const { return in_extent(c) ? cells[local(c)] : Passability::Blocked; }
  bool traversable(CellIndex c) const { return at(c) == Passability::Open; }
};

/// Free (plus Unknown when unknown_navigable) cells, with every Obstacle
/// cell grown by `inflation_radius`.
TraversabilityGrid build_traversability(const OccupancyMap& map, bool unknown_navigable,
                                        double inflation_radius);

/// Same, but only obstacles hit during the map's current session block;
/// older ones count as navigable.
TraversabilityGrid build_session_traversability(const OccupancyMap& map, double inflation_radius);

/// Marks the disc around obstacle cell `c` as inflated and `c` as blocked.
void stamp_obstacle(TraversabilityGrid& grid, CellIndex c, double inflation_radius);

/// Keeps an unknown-navigable traversability grid in step with a growing
/// map without rebuilding it every step.
class PlanningGrid {
 public:
  explicit PlanningGrid(double inflation_radius = 0.2) : inflation_radius_(inflation_radius) {}

  /// Returns true if the grid changed.
  bool sync(const OccupancyMap& map);
  const TraversabilityGrid& grid() const { return grid_; }
  void reset() { synced_ = false; }

 private:
  double inflation_radius_;
  TraversabilityGrid grid_;
  bool synced_ = false;
  const OccupancyMap* source_ = nullptr;
  std::uint64_t layout_ = 0;
  std::size_t obstacles_seen_ = 0;
  std::size_t cleared_ = 0;
};

/// Travel cost in meters over a grid; +inf where unreachable.
struct DistanceField {
  int min_x = 0;
  int min_y = 0;
  int width = 0;
  int height = 0;
  double resolution = 0.05;
  std::vector<CellIndex> sources;
  std::vector<double> values;

  bool in_extent(CellIndex c) const {
    return c.x >= min_x && c.y >= min_y && c.x < min_x + width && c.y < min_y + height;
  }
  double at(CellIndex c) const {
    return in_extent(c) ? values[static_cast<std::size_t>(c.y - min_y) * static_cast<std::size_t>(width) +
                                 static_cast<std::size_t>(c.x - min_x)]
                        : kUnreachable;
  }
  CellIndex cell_of(Vec2 p) const;
  Vec2 center_of(CellIndex c) const;
  double at(Vec2 p) const { return at(cell_of(p)); }
};

struct FmmOptions {
  /// Stop once this cell is accepted and the front has moved `stop_slack`
  /// beyond it. Cells never accepted stay +inf.
  std::optional<CellIndex> stop_at;
  double stop_slack = kUnreachable;
  /// Inflated (not blocked) cells within this many meters of `escape_center`
  /// count as open, so an agent that drifted into the inflation band can
  /// still plan out of it.
  std::optional<Vec2> escape_center;
  double escape_radius = 0.0;
  /// Called on every accepted cell in acceptance order; returning false
  /// ends the march.
  std::function<bool(CellIndex, double)> on_accept;
};

/// First-order Fast Marching from every source (cost 0) over open cells.
DistanceField fmm_solve(const TraversabilityGrid& grid, std::span<const CellIndex> sources,
                        const FmmOptions& opts = {});

/// Nearest open cell to `c` within `radius` (meters), scanning rings outward;
/// ties go to the lowest (y, x).
std::optional<CellIndex> snap_to_open(const TraversabilityGrid& grid, CellIndex c, double radius);

/// Distance field toward `goal`. Throws GoalBlocked if the goal cell is not
/// traversable (the planner's caller decides whether to snap).
DistanceField fmm_field(const OccupancyMap& map, Vec2 goal, bool unknown_navigable,
                        const PlannerConfig& cfg = {});

/// Steepest descent over the 8-neighborhood (lower T, then lexicographic
/// neighbor order) from `start`, at most `max_steps` moves.
std::vector<CellIndex> descent_path(const DistanceField& field, CellIndex start, std::size_t max_steps);

/// Turn toward the lookahead waypoint when the heading error exceeds the
/// deadband, otherwise move forward. A 180 degree error turns left. Throws
/// NoDescent when pose's cell is a strict local minimum above 0 or is not
/// reached by the field.
Action next_action(const DistanceField& field, const Pose& pose, const PlannerConfig& cfg = {});

/// Frontier with the best size / (1 + geodesic distance) score, or the
/// farthest reachable Free cell once no frontier remains. A frontier whose
/// centroid is not traversable is scored at its geodesically nearest usable
/// member. Score ties go to the frontier listed first.
Vec2 exploration_goal(const OccupancyMap& map, const Pose& pose, const PlannerConfig& cfg = {},
                      std::span<const Vec2> excluded = {});

/// Same, reusing a grid that already matches `map`.
Vec2 exploration_goal(const OccupancyMap& map, const TraversabilityGrid& grid, const Pose& pose,
                      const PlannerConfig& cfg = {}, std::span<const Vec2> excluded = {});

/// fmm_field(b) sampled at a; +inf when either endpoint is blocked or the
/// two are disconnected.
double geodesic_distance(const OccupancyMap& map, Vec2 a, Vec2 b, bool unknown_navigable = false,
                         const PlannerConfig& cfg = {});

/// "FLD v1 <width> <height> <resolution> <origin_x> <origin_y>" then rows,
/// top first, of space-separated costs ("inf" when unreachable).
void write_field(const DistanceField& field, std::ostream& out);

}  // namespace absnav
