#include "absnav/planning.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "absnav/errors.hpp"

namespace absnav {
namespace {

std::vector<CellIndex> disc_offsets(double radius, double resolution) {
  const double rc = radius / resolution;
  const int r = static_cast<int>(std::ceil(rc));
  std::vector<CellIndex> out;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= rc * rc + 1e-9) out.push_back({dx, dy});
  return out;
}

void stamp(TraversabilityGrid& grid, CellIndex c, const std::vector<CellIndex>& offsets) {
  for (const CellIndex o : offsets) {
    const CellIndex n{c.x + o.x, c.y + o.y};
    if (!grid.in_extent(n)) continue;
    auto& v = grid.cells[grid.local(n)];
    if (v == Passability::Open) v = Passability::Inflated;
  }
  if (grid.in_extent(c)) grid.cells[grid.local(c)] = Passability::Blocked;
}

// Binary min-heap of cell indices keyed by trial value (ties by index),
// with decrease-key so every cell is queued at most once.
class CellHeap {
 public:
  CellHeap(const std::vector<double>& key, std::size_t n) : key_(key), pos_(n, kAbsent) { heap_.reserve(4096); }

  bool empty() const { return heap_.empty(); }
  bool contains(std::size_t i) const { return pos_[i] != kAbsent; }

  /// Inserts i or restores order after key[i] decreased.
  void push_or_decrease(std::size_t i) {
    if (pos_[i] == kAbsent) {
      pos_[i] = static_cast<std::uint32_t>(heap_.size());
      heap_.push_back(static_cast<std::uint32_t>(i));
    }
    sift_up(pos_[i]);
  }

  std::size_t pop() {
    const std::uint32_t top = heap_.front();
    pos_[top] = kAbsent;
    const std::uint32_t last = heap_.back();
    heap_.pop_back();
    if (!heap_.empty()) {
      heap_[0] = last;
      pos_[last] = 0;
      sift_down(0);
    }
    return top;
  }

 private:
  static constexpr std::uint32_t kAbsent = 0xFFFFFFFFu;

  bool less(std::uint32_t a, std::uint32_t b) const {
    return key_[a] < key_[b] || (key_[a] == key_[b] && a < b);
  }
  void place(std::size_t at, std::uint32_t v) {
    heap_[at] = v;
    pos_[v] = static_cast<std::uint32_t>(at);
  }
  void sift_up(std::size_t at) {
    const std::uint32_t v = heap_[at];
    while (at > 0) {
      const std::size_t parent = (at - 1) / 2;
      if (!less(v, heap_[parent])) break;
      place(at, heap_[parent]);
      at = parent;
    }
    place(at, v);
  }
  void sift_down(std::size_t at) {
    const std::uint32_t v = heap_[at];
    const std::size_t n = heap_.size();
    for (;;) {
      std::size_t child = 2 * at + 1;
      if (child >= n) break;
      if (child + 1 < n && less(heap_[child + 1], heap_[child])) ++child;
      if (!less(heap_[child], v)) break;
      place(at, heap_[child]);
      at = child;
    }
    place(at, v);
  }

  const std::vector<double>& key_;
  std::vector<std::uint32_t> pos_;
  std::vector<std::uint32_t> heap_;
};

}  // namespace

TraversabilityGrid build_traversability(const OccupancyMap& map, bool unknown_navigable, double inflation_radius) {
  TraversabilityGrid g;
  g.min_x = map.min_x();
  g.min_y = map.min_y();
  g.width = map.width();
  g.height = map.height();
  g.resolution = map.resolution();
  const auto raw = map.raw();
  g.cells.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto c = static_cast<Cell>(raw[i]);
    const bool open = c == Cell::Free || (c == Cell::Unknown && unknown_navigable);
    g.cells[i] = open ? Passability::Open : Passability::Blocked;
  }
  const auto offsets = disc_offsets(inflation_radius, g.resolution);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      if (static_cast<Cell>(raw[static_cast<std::size_t>(y) * static_cast<std::size_t>(g.width) +
                                static_cast<std::size_t>(x)]) == Cell::Obstacle)
        stamp(g, {x + g.min_x, y + g.min_y}, offsets);
  return g;
}

TraversabilityGrid build_session_traversability(const OccupancyMap& map, double inflation_radius) {
  TraversabilityGrid g;
  g.min_x = map.min_x();
  g.min_y = map.min_y();
  g.width = map.width();
  g.height = map.height();
  g.resolution = map.resolution();
  g.cells.assign(map.raw().size(), Passability::Open);
  const auto offsets = disc_offsets(inflation_radius, g.resolution);
  for (int y = g.min_y; y < g.min_y + g.height; ++y)
    for (int x = g.min_x; x < g.min_x + g.width; ++x)
      if (map.at({x, y}) == Cell::Obstacle && map.session_hit({x, y})) stamp(g, {x, y}, offsets);
  return g;
}

void stamp_obstacle(TraversabilityGrid& grid, CellIndex c, double inflation_radius) {
  stamp(grid, c, disc_offsets(inflation_radius, grid.resolution));
}

bool PlanningGrid::sync(const OccupancyMap& map) {
  if (!synced_ || source_ != &map || layout_ != map.layout_generation() ||
      obstacles_seen_ > map.obstacle_log().size() || cleared_ != map.cleared_count()) {
    grid_ = build_traversability(map, true, inflation_radius_);
    synced_ = true;
    cleared_ = map.cleared_count();
    source_ = &map;
    layout_ = map.layout_generation();
    obstacles_seen_ = map.obstacle_log().size();
    return true;
  }
  const auto& log = map.obstacle_log();
  if (obstacles_seen_ == log.size()) return false;
  const auto offsets = disc_offsets(inflation_radius_, grid_.resolution);
  for (std::size_t i = obstacles_seen_; i < log.size(); ++i) stamp(grid_, log[i], offsets);
  obstacles_seen_ = log.size();
  return true;
}

CellIndex DistanceField::cell_of(Vec2 p) const {
  return {static_cast<int>(std::floor(p.x / resolution)), static_cast<int>(std::floor(p.y / resolution))};
}

Vec2 DistanceField::center_of(CellIndex c) const {
  return {(c.x + 0.5) * resolution, (c.y + 0.5) * resolution};
}

DistanceField fmm_solve(const TraversabilityGrid& grid, std::span<const CellIndex> sources, const FmmOptions& opts) {
  DistanceField f;
  f.min_x = grid.min_x;
  f.min_y = grid.min_y;
  f.width = grid.width;
  f.height = grid.height;
  f.resolution = grid.resolution;
  f.sources.assign(sources.begin(), sources.end());
  const std::size_t n = grid.cells.size();
  f.values.assign(n, kUnreachable);
  if (n == 0) return f;

  const double h = grid.resolution;
  const double two_h2 = 2.0 * h * h;
  const int w = grid.width;
  const int ht = grid.height;
  // values[] holds accepted cells only; trial[] the tentative ones.
  std::vector<double> trial(n, kUnreachable);
  std::vector<std::uint8_t> open(n);
  for (std::size_t i = 0; i < n; ++i) open[i] = grid.cells[i] == Passability::Open;
  if (opts.escape_center && opts.escape_radius > 0.0) {
    const CellIndex c{static_cast<int>(std::floor(opts.escape_center->x / h)),
                      static_cast<int>(std::floor(opts.escape_center->y / h))};
    for (const CellIndex o : disc_offsets(opts.escape_radius, h)) {
      const CellIndex q{c.x + o.x, c.y + o.y};
      if (grid.in_extent(q) && grid.cells[grid.local(q)] == Passability::Inflated) open[grid.local(q)] = 1;
    }
  }

  CellHeap heap(trial, n);
  for (const CellIndex s : sources) {
    if (!grid.in_extent(s)) continue;
    const std::size_t i = grid.local(s);
    trial[i] = 0.0;
    heap.push_or_decrease(i);
  }
  // Point-source start: diagonal neighbours get their exact distance when a
  // shared side cell is open. Without it the two-axis update overshoots the
  // diagonal by ~20% next to the source and the error carries outward.
  auto open_at = [&](CellIndex c) { return grid.in_extent(c) && open[grid.local(c)]; };
  for (const CellIndex s : sources) {
    if (!open_at(s)) continue;
    for (const int dx : {-1, 1})
      for (const int dy : {-1, 1}) {
        const CellIndex d{s.x + dx, s.y + dy};
        if (!open_at(d) || !(open_at({s.x + dx, s.y}) || open_at({s.x, s.y + dy}))) continue;
        const std::size_t j = grid.local(d);
        if (std::sqrt(2.0) * h < trial[j]) {
          trial[j] = std::sqrt(2.0) * h;
          heap.push_or_decrease(j);
        }
      }
  }

  std::optional<std::size_t> stop_idx;
  if (opts.stop_at && grid.in_extent(*opts.stop_at)) stop_idx = grid.local(*opts.stop_at);
  double stop_value = kUnreachable;
  double* const val = f.values.data();
  const std::size_t uw = static_cast<std::size_t>(w);

  while (!heap.empty()) {
    const std::size_t i = heap.pop();
    const double t = trial[i];
    val[i] = t;
    if (stop_idx && i == *stop_idx) stop_value = t;
    if (t > stop_value + opts.stop_slack) break;
    const int x = static_cast<int>(i % uw);
    const int y = static_cast<int>(i / uw);
    if (opts.on_accept && !opts.on_accept({x + grid.min_x, y + grid.min_y}, t)) break;

    auto relax = [&](int qx, int qy, std::size_t j) {
      if (val[j] != kUnreachable || !open[j]) return;
      const double a = std::min(qx > 0 ? val[j - 1] : kUnreachable, qx + 1 < w ? val[j + 1] : kUnreachable);
      const double b = std::min(qy > 0 ? val[j - uw] : kUnreachable, qy + 1 < ht ? val[j + uw] : kUnreachable);
      const double d = a - b;
      const double tj = std::abs(d) < h ? 0.5 * (a + b + std::sqrt(two_h2 - d * d)) : std::min(a, b) + h;
      if (tj < trial[j]) {
        trial[j] = tj;
        heap.push_or_decrease(j);
      }
    };
    if (x > 0) relax(x - 1, y, i - 1);
    if (x + 1 < w) relax(x + 1, y, i + 1);
    if (y > 0) relax(x, y - 1, i - uw);
    if (y + 1 < ht) relax(x, y + 1, i + uw);
  }
  return f;
}

std::optional<CellIndex> snap_to_open(const TraversabilityGrid& grid, CellIndex c, double radius) {
  if (grid.traversable(c)) return c;
  const double rc = radius / grid.resolution;
  const int r = static_cast<int>(std::ceil(rc));
  std::optional<CellIndex> best;
  int best_d2 = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int d2 = dx * dx + dy * dy;
      if (d2 > rc * rc + 1e-9) continue;
      const CellIndex q{c.x + dx, c.y + dy};
      if (!grid.traversable(q)) continue;
      if (!best || d2 < best_d2) {
        best = q;
        best_d2 = d2;
      }
    }
  return best;
}

DistanceField fmm_field(const OccupancyMap& map, Vec2 goal, bool unknown_navigable, const PlannerConfig& cfg) {
  const TraversabilityGrid grid = build_traversability(map, unknown_navigable, cfg.inflation_radius);
  const CellIndex g = map.cell_of(goal);
  if (!grid.traversable(g)) throw GoalBlocked("goal cell is not traversable");
  const CellIndex src[1] = {g};
  return fmm_solve(grid, src);
}

std::vector<CellIndex> descent_path(const DistanceField& field, CellIndex start, std::size_t max_steps) {
  static constexpr int kOrder[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
  std::vector<CellIndex> path{start};
  CellIndex cur = start;
  double t = field.at(cur);
  for (std::size_t k = 0; k < max_steps && t > 0.0; ++k) {
    std::optional<CellIndex> next;
    double best = t;
    for (const auto& o : kOrder) {
      const CellIndex q{cur.x + o[0], cur.y + o[1]};
      const double v = field.at(q);
      if (v < best) {
        best = v;
        next = q;
      }
    }
    if (!next) break;
    cur = *next;
    t = best;
    path.push_back(cur);
  }
  return path;
}

Action next_action(const DistanceField& field, const Pose& pose, const PlannerConfig& cfg) {
  const CellIndex c = field.cell_of(pose.position());
  const double t = field.at(c);
  if (!std::isfinite(t)) throw NoDescent("pose is outside the reached part of the field");
  if (t == 0.0) return Action::TurnLeft;
  const auto path = descent_path(field, c, static_cast<std::size_t>(std::max(cfg.lookahead_cells, 1)));
  if (path.size() < 2) throw NoDescent("local minimum in distance field");
  const Vec2 target = field.center_of(path.back());
  const Vec2 d = target - pose.position();
  const double err = normalize_angle(std::atan2(d.y, d.x) - pose.theta);
  if (std::abs(err) <= cfg.heading_deadband + 1e-9) return Action::MoveForward;
  // normalize_angle maps a half turn to -pi; that tie goes left.
  if (err > 0.0 || err <= -kPi + 1e-12) return Action::TurnLeft;
  return Action::TurnRight;
}

Vec2 exploration_goal(const OccupancyMap& map, const Pose& pose, const PlannerConfig& cfg,
                      std::span<const Vec2> excluded) {
  return exploration_goal(map, build_traversability(map, true, cfg.inflation_radius), pose, cfg, excluded);
}

Vec2 exploration_goal(const OccupancyMap& map, const TraversabilityGrid& grid, const Pose& pose,
                      const PlannerConfig& cfg, std::span<const Vec2> excluded) {
  auto usable = [&](Vec2 p) {
    if (distance(p, pose.position()) < cfg.exploration_min_distance) return false;
    return std::none_of(excluded.begin(), excluded.end(),
                        [&](Vec2 e) { return distance(e, p) <= cfg.exploration_exclusion_radius; });
  };

  // A frontier is scored at its centroid when that cell is open, otherwise
  // at its geodesically nearest usable member.
  struct Candidate {
    const Frontier* frontier;
    bool at_centroid;
    bool settled = false;
  };
  const std::vector<Frontier> frontiers = frontier_cells(map);
  std::vector<Candidate> cands;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_cell;
  auto key = [](CellIndex c) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x)) << 32) | static_cast<std::uint32_t>(c.y);
  };
  std::size_t largest = 0;
  for (const Frontier& fr : frontiers) {
    if (fr.size() < cfg.min_frontier_size) continue;
    const CellIndex cc = map.cell_of(fr.centroid);
    const bool at_centroid = grid.traversable(cc);
    if (at_centroid && !usable(fr.centroid)) continue;
    const std::size_t k = cands.size();
    cands.push_back({&fr, at_centroid});
    if (at_centroid)
      by_cell[key(cc)].push_back(k);
    else
      for (const CellIndex c : fr.cells) by_cell[key(c)].push_back(k);
    largest = std::max(largest, fr.size());
  }

  std::optional<Vec2> best;
  std::size_t best_k = 0;
  double best_score = -1.0;
  FmmOptions opts;
  opts.escape_center = pose.position();
  opts.escape_radius = cfg.inflation_radius;
  if (!cands.empty())
    opts.on_accept = [&](CellIndex c, double t) {
      if (const auto it = by_cell.find(key(c)); it != by_cell.end())
        for (const std::size_t k : it->second) {
          Candidate& cand = cands[k];
          if (cand.settled) continue;
          const Vec2 target = cand.at_centroid ? cand.frontier->centroid : map.center_of(c);
          if (!cand.at_centroid && !usable(target)) continue;
          cand.settled = true;
          const double score = static_cast<double>(cand.frontier->size()) / (1.0 + t);
          if (score > best_score || (score == best_score && k < best_k)) {
            best_score = score;
            best_k = k;
            best = target;
          }
        }
      // Nothing still unreached can score above largest / (1 + t).
      return !(best && static_cast<double>(largest) / (1.0 + t) < best_score);
    };
  const CellIndex src[1] = {map.cell_of(pose.position())};
  const DistanceField field = fmm_solve(grid, src, opts);
  if (best) return *best;

  // Coverage saturated: farthest reachable Free cell. The march above ran to
  // completion because nothing was found.
  double far = -1.0;
  Vec2 far_point = pose.position();
  for (int y = map.min_y(); y < map.min_y() + map.height(); ++y)
    for (int x = map.min_x(); x < map.min_x() + map.width(); ++x) {
      if (map.at({x, y}) != Cell::Free) continue;
      const double v = field.at(CellIndex{x, y});
      if (!std::isfinite(v) || v <= far) continue;
      if (!usable(map.center_of({x, y}))) continue;
      far = v;
      far_point = map.center_of({x, y});
    }
  return far_point;
}

double geodesic_distance(const OccupancyMap& map, Vec2 a, Vec2 b, bool unknown_navigable, const PlannerConfig& cfg) {
  const TraversabilityGrid grid = build_traversability(map, unknown_navigable, cfg.inflation_radius);
  const CellIndex ca = map.cell_of(a);
  const CellIndex cb = map.cell_of(b);
  if (!grid.traversable(ca) || !grid.traversable(cb)) return kUnreachable;
  const CellIndex src[1] = {cb};
  FmmOptions opts;
  opts.stop_at = ca;
  opts.stop_slack = 0.0;
  return fmm_solve(grid, src, opts).at(ca);
}

void write_field(const DistanceField& field, std::ostream& out) {
  out << "FLD v1 " << field.width << ' ' << field.height << ' ' << field.resolution << ' '
      << field.min_x * field.resolution << ' ' << field.min_y * field.resolution << '\n';
  for (int y = field.min_y + field.height - 1; y >= field.min_y; --y) {
    for (int x = field.min_x; x < field.min_x + field.width; ++x) {
      if (x > field.min_x) out << ' ';
      const double v = field.at(CellIndex{x, y});
      if (std::isfinite(v)) {
        out << v;
      } else {
        out << "inf";
      }
    }
    out << '\n';
  }
}

}  // namespace absnav
