#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "absnav/geometry.hpp"
#include "absnav/world.hpp"

namespace absnav {

enum class Cell : std::uint8_t { Unknown = 0, Free = 1, Obstacle = 2 };

/// Index on the global lattice: cell (i, j) covers [i*h, (i+1)*h) x [j*h, (j+1)*h).
struct CellIndex {
  int x = 0;
  int y = 0;
  constexpr bool operator==(const CellIndex&) const = default;
  constexpr auto operator<=>(const CellIndex&) const = default;
};

/// Ternary occupancy grid that grows on demand. Obstacle cells are sticky
/// toward single readings. The only way back to Free: an Obstacle that no
/// scan of the current session has hit, crossed by rays from
/// kClearPasses distinct poses of this session. Obstacles copied in by a
/// merge are the only ones that can qualify.
class OccupancyMap {
 public:
  explicit OccupancyMap(double resolution = 0.05);

  double resolution() const { return resolution_; }
  int min_x() const { return min_x_; }
  int min_y() const { return min_y_; }
  int width() const { return width_; }
  int height() const { return height_; }
  /// Lower-left corner of the first stored cell.
  Vec2 origin() const { return {min_x_ * resolution_, min_y_ * resolution_}; }

  CellIndex cell_of(Vec2 p) const;
  Vec2 center_of(CellIndex c) const;
  bool in_extent(CellIndex c) const {
    return c.x >= min_x_ && c.y >= min_y_ && c.x < min_x_ + width_ && c.y < min_y_ + height_;
  }

  /// Unknown outside the stored extent.
  Cell at(CellIndex c) const {
    return in_extent(c) ? static_cast<Cell>(cells_[local(c)]) : Cell::Unknown;
  }

  static constexpr int kClearPasses = 3;

  /// Raises the cell to `value` under the precedence Obstacle > Free > Unknown.
  void raise(CellIndex c, Cell value);
  /// A live reading ended in `c`: Obstacle, and owned by this session.
  void observe_hit(CellIndex c);
  /// A live ray crossed `c` from the pose identified by `pose_key`.
  void observe_pass(CellIndex c, std::uint32_t pose_key);
  /// True if a scan of the current session ended in `c`.
  bool session_hit(CellIndex c) const { return in_extent(c) && (evidence_[local(c)] & 0x80) != 0; }
  /// Forgets which obstacles the previous session observed.
  void begin_session();
  /// Grows the extent so that the box [lo, hi] is stored; a negative
  /// padding selects the default growth margin.
  void ensure_contains(CellIndex lo, CellIndex hi, int padding = -1);

  std::size_t known_cells() const;
  /// Incremented on every cell change.
  std::uint64_t revision() const { return revision_; }
  /// Incremented whenever the storage is re-laid out.
  std::uint64_t layout_generation() const { return layout_generation_; }
  /// Every cell that turned Obstacle, in order of occurrence.
  const std::vector<CellIndex>& obstacle_log() const { return obstacle_log_; }
  /// Number of Obstacle cells that have reverted to Free.
  std::size_t cleared_count() const { return cleared_count_; }

  /// Raw row-major storage (row = y - min_y).
  std::span<const std::uint8_t> raw() const { return cells_; }

  bool operator==(const OccupancyMap& o) const;

 private:
  std::size_t local(CellIndex c) const {
    return static_cast<std::size_t>(c.y - min_y_) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c.x - min_x_);
  }

  double resolution_;
  int min_x_ = 0;
  int min_y_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
  // Per cell: bit 7 = hit this session, low bits = distinct crossing poses.
  std::vector<std::uint8_t> evidence_;
  std::vector<std::uint32_t> last_pass_;
  std::size_t cleared_count_ = 0;
  std::uint64_t revision_ = 0;
  std::uint64_t layout_generation_ = 0;
  std::vector<CellIndex> obstacle_log_;
};

/// Cells visited by the segment a -> b, in order (Amanatides-Woo traversal).
std::vector<CellIndex> traverse_cells(const OccupancyMap& map, Vec2 a, Vec2 b);

/// Carves free space along every ray and marks the hit cell as Obstacle when
/// the reading is below max_range.
void integrate_scan(OccupancyMap& map, const Pose& pose, std::span<const double> depth,
                    const SensorConfig& cfg = {});

/// Writes every known cell of `src` into `dst` through `t` (nearest cell,
/// precedence Obstacle > Free > Unknown).
void merge_maps(OccupancyMap& dst, const OccupancyMap& src, const FrameTransform& t);

struct Frontier {
  std::vector<CellIndex> cells;
  Vec2 centroid{};
  std::size_t size() const { return cells.size(); }
};

/// 8-connected components of Free cells that are 4-adjacent to an Unknown cell.
std::vector<Frontier> frontier_cells(const OccupancyMap& map);

/// "OCC v1 <width> <height> <resolution> <origin_x> <origin_y>" followed by
/// one text row per grid row, top (max y) first, in {?, ., #}.
void write_occ(const OccupancyMap& map, std::ostream& out);
OccupancyMap read_occ(std::istream& in);
std::string to_occ_string(const OccupancyMap& map);

}  // namespace absnav
