#include "absnav/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <cstring>

#include "absnav/errors.hpp"

namespace absnav {
namespace {

constexpr int kGrowPadding = 40;
constexpr std::uint8_t kSessionHit = 0x80;

std::uint32_t pose_key(const Pose& p) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (double v : {p.x, p.y, p.theta}) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    h = (h ^ bits) * 0x100000001B3ULL;
  }
  return static_cast<std::uint32_t>(h ^ (h >> 32));
}

char cell_char(Cell c) {
  switch (c) {
    case Cell::Unknown: return '?';
    case Cell::Free: return '.';
    case Cell::Obstacle: return '#';
  }
  return '?';
}

}  // namespace

OccupancyMap::OccupancyMap(double resolution) : resolution_(resolution) {
  if (!(resolution > 0.0)) throw ConfigError("map resolution must be positive");
}

CellIndex OccupancyMap::cell_of(Vec2 p) const {
  return {static_cast<int>(std::floor(p.x / resolution_)),
          static_cast<int>(std::floor(p.y / resolution_))};
}

Vec2 OccupancyMap::center_of(CellIndex c) const {
  return {(c.x + 0.5) * resolution_, (c.y + 0.5) * resolution_};
}

void OccupancyMap::ensure_contains(CellIndex lo, CellIndex hi, int padding) {
  if (width_ > 0 && in_extent(lo) && in_extent(hi)) return;
  if (padding < 0) padding = kGrowPadding;
  int nx0 = lo.x - padding;
  int ny0 = lo.y - padding;
  int nx1 = hi.x + padding + 1;
  int ny1 = hi.y + padding + 1;
  if (width_ > 0) {
    nx0 = std::min(nx0, min_x_);
    ny0 = std::min(ny0, min_y_);
    nx1 = std::max(nx1, min_x_ + width_);
    ny1 = std::max(ny1, min_y_ + height_);
  }
  const std::size_t n = static_cast<std::size_t>(nx1 - nx0) * static_cast<std::size_t>(ny1 - ny0);
  auto regrow = [&](auto& v) {
    std::remove_reference_t<decltype(v)> grown(n, 0);
    for (int y = 0; y < height_; ++y) {
      const auto src = v.begin() + static_cast<std::ptrdiff_t>(y) * width_;
      const auto dst = grown.begin() +
                       static_cast<std::ptrdiff_t>(y + min_y_ - ny0) * (nx1 - nx0) + (min_x_ - nx0);
      std::copy(src, src + width_, dst);
    }
    v = std::move(grown);
  };
  regrow(cells_);
  regrow(evidence_);
  regrow(last_pass_);
  min_x_ = nx0;
  min_y_ = ny0;
  width_ = nx1 - nx0;
  height_ = ny1 - ny0;
  ++layout_generation_;
}

void OccupancyMap::raise(CellIndex c, Cell value) {
  if (value == Cell::Unknown) return;
  if (!in_extent(c)) ensure_contains(c, c);
  auto& slot = cells_[local(c)];
  if (slot >= static_cast<std::uint8_t>(value)) return;
  slot = static_cast<std::uint8_t>(value);
  ++revision_;
  if (value == Cell::Obstacle) obstacle_log_.push_back(c);
}

void OccupancyMap::observe_hit(CellIndex c) {
  raise(c, Cell::Obstacle);
  auto& e = evidence_[local(c)];
  e = kSessionHit;
}

void OccupancyMap::observe_pass(CellIndex c, std::uint32_t key) {
  if (!in_extent(c)) ensure_contains(c, c);
  const std::size_t i = local(c);
  if (cells_[i] != static_cast<std::uint8_t>(Cell::Obstacle)) {
    raise(c, Cell::Free);
    return;
  }
  std::uint8_t& e = evidence_[i];
  if ((e & kSessionHit) || ((e & 0x7F) > 0 && last_pass_[i] == key)) return;
  last_pass_[i] = key;
  if (++e < kClearPasses) return;
  e = 0;
  cells_[i] = static_cast<std::uint8_t>(Cell::Free);
  ++revision_;
  ++cleared_count_;
}

void OccupancyMap::begin_session() {
  std::fill(evidence_.begin(), evidence_.end(), 0);
  std::fill(last_pass_.begin(), last_pass_.end(), 0);
}

std::size_t OccupancyMap::known_cells() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(), [](std::uint8_t v) { return v != 0; }));
}

bool OccupancyMap::operator==(const OccupancyMap& o) const {
  if (resolution_ != o.resolution_) return false;
  // Compare content over the union of extents; padding differences don't matter.
  const int x0 = std::min(min_x_, o.min_x_);
  const int y0 = std::min(min_y_, o.min_y_);
  const int x1 = std::max(min_x_ + width_, o.min_x_ + o.width_);
  const int y1 = std::max(min_y_ + height_, o.min_y_ + o.height_);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (at({x, y}) != o.at({x, y})) return false;
  return true;
}

std::vector<CellIndex> traverse_cells(const OccupancyMap& map, Vec2 a, Vec2 b) {
  const double h = map.resolution();
  CellIndex c = map.cell_of(a);
  const CellIndex end = map.cell_of(b);
  std::vector<CellIndex> out{c};
  const Vec2 d = b - a;
  const int step_x = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
  const int step_y = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double t_delta_x = step_x != 0 ? h / std::abs(d.x) : kInf;
  const double t_delta_y = step_y != 0 ? h / std::abs(d.y) : kInf;
  double t_max_x = kInf;
  double t_max_y = kInf;
  if (step_x != 0) {
    const double boundary = (c.x + (step_x > 0 ? 1 : 0)) * h;
    t_max_x = (boundary - a.x) / d.x;
  }
  if (step_y != 0) {
    const double boundary = (c.y + (step_y > 0 ? 1 : 0)) * h;
    t_max_y = (boundary - a.y) / d.y;
  }
  const int max_iter = std::abs(end.x - c.x) + std::abs(end.y - c.y);
  for (int i = 0; i < max_iter && !(c == end); ++i) {
    if (t_max_x < t_max_y) {
      c.x += step_x;
      t_max_x += t_delta_x;
    } else {
      c.y += step_y;
      t_max_y += t_delta_y;
    }
    out.push_back(c);
  }
  if (!(out.back() == end)) out.push_back(end);
  return out;
}

void integrate_scan(OccupancyMap& map, const Pose& pose, std::span<const double> depth,
                    const SensorConfig& cfg) {
  const Vec2 origin = pose.position();
  const std::uint32_t key = pose_key(pose);
  const double reach = cfg.max_range + map.resolution();
  map.ensure_contains(map.cell_of(origin - Vec2{reach, reach}), map.cell_of(origin + Vec2{reach, reach}));
  for (std::size_t r = 0; r < depth.size(); ++r) {
    const double heading = pose.theta + ray_bearing(static_cast<int>(r), cfg);
    const double range = std::min(depth[r], cfg.max_range);
    const Vec2 end = origin + Vec2{std::cos(heading), std::sin(heading)} * range;
    const auto cells = traverse_cells(map, origin, end);
    const bool hit = range < cfg.max_range;
    const std::size_t free_count = hit ? cells.size() - 1 : cells.size();
    for (std::size_t i = 0; i < free_count; ++i) map.observe_pass(cells[i], key);
    if (hit) map.observe_hit(cells.back());
  }
}

void merge_maps(OccupancyMap& dst, const OccupancyMap& src, const FrameTransform& t) {
  if (src.width() == 0 || src.height() == 0) return;
  {
    const Vec2 o = src.origin();
    const double w = src.width() * src.resolution();
    const double hh = src.height() * src.resolution();
    Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    Vec2 hi{-lo.x, -lo.y};
    for (const Vec2 corner : {o, o + Vec2{w, 0.0}, o + Vec2{0.0, hh}, o + Vec2{w, hh}}) {
      const Vec2 p = t.apply(corner);
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    dst.ensure_contains(dst.cell_of(lo), dst.cell_of(hi), 0);
  }
  bool any_known = false;
  Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Vec2 hi{-lo.x, -lo.y};
  const int x_end = src.min_x() + src.width();
  const int y_end = src.min_y() + src.height();
  // Forward pass: every known source cell lands on its nearest destination cell.
  for (int y = src.min_y(); y < y_end; ++y) {
    for (int x = src.min_x(); x < x_end; ++x) {
      const Cell v = src.at({x, y});
      if (v == Cell::Unknown) continue;
      const Vec2 p = t.apply(src.center_of({x, y}));
      dst.raise(dst.cell_of(p), v);
      any_known = true;
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
  }
  if (!any_known) return;
  // Backward pass: fill destination cells that the forward rounding skipped
  // (non-axis-aligned rotations leave single-cell holes).
  const FrameTransform inv = t.inverse();
  const CellIndex c0 = dst.cell_of(lo);
  const CellIndex c1 = dst.cell_of(hi);
  for (int y = c0.y; y <= c1.y; ++y) {
    for (int x = c0.x; x <= c1.x; ++x) {
      if (dst.at({x, y}) != Cell::Unknown) continue;
      const Cell v = src.at(src.cell_of(inv.apply(dst.center_of({x, y}))));
      if (v != Cell::Unknown) dst.raise({x, y}, v);
    }
  }
}

std::vector<Frontier> frontier_cells(const OccupancyMap& map) {
  std::vector<Frontier> out;
  const int w = map.width();
  const int hgt = map.height();
  if (w == 0 || hgt == 0) return out;
  const int x0 = map.min_x();
  const int y0 = map.min_y();
  auto is_frontier = [&](int x, int y) {
    if (map.at({x, y}) != Cell::Free) return false;
    return map.at({x + 1, y}) == Cell::Unknown || map.at({x - 1, y}) == Cell::Unknown ||
           map.at({x, y + 1}) == Cell::Unknown || map.at({x, y - 1}) == Cell::Unknown;
  };
  std::vector<std::uint8_t> state(static_cast<std::size_t>(w) * static_cast<std::size_t>(hgt), 0);
  auto idx = [&](int x, int y) {
    return static_cast<std::size_t>(y - y0) * static_cast<std::size_t>(w) +
           static_cast<std::size_t>(x - x0);
  };
  for (int y = y0; y < y0 + hgt; ++y)
    for (int x = x0; x < x0 + w; ++x)
      if (is_frontier(x, y)) state[idx(x, y)] = 1;

  std::vector<CellIndex> stack;
  for (int y = y0; y < y0 + hgt; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      if (state[idx(x, y)] != 1) continue;
      Frontier f;
      stack.push_back({x, y});
      state[idx(x, y)] = 2;
      while (!stack.empty()) {
        const CellIndex c = stack.back();
        stack.pop_back();
        f.cells.push_back(c);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = c.x + dx;
            const int ny = c.y + dy;
            if (nx < x0 || ny < y0 || nx >= x0 + w || ny >= y0 + hgt) continue;
            if (state[idx(nx, ny)] != 1) continue;
            state[idx(nx, ny)] = 2;
            stack.push_back({nx, ny});
          }
        }
      }
      std::sort(f.cells.begin(), f.cells.end(), [](CellIndex a, CellIndex b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
      });
      Vec2 sum{};
      for (const CellIndex& c : f.cells) sum = sum + map.center_of(c);
      f.centroid = sum * (1.0 / static_cast<double>(f.cells.size()));
      out.push_back(std::move(f));
    }
  }
  return out;
}

void write_occ(const OccupancyMap& map, std::ostream& out) {
  std::ostringstream header;
  header.precision(17);
  header << "OCC v1 " << map.width() << ' ' << map.height() << ' ' << map.resolution() << ' '
         << map.origin().x << ' ' << map.origin().y << '\n';
  out << header.str();
  std::string row(static_cast<std::size_t>(map.width()), '?');
  for (int y = map.min_y() + map.height() - 1; y >= map.min_y(); --y) {
    for (int x = 0; x < map.width(); ++x)
      row[static_cast<std::size_t>(x)] = cell_char(map.at({map.min_x() + x, y}));
    out << row << '\n';
  }
}

std::string to_occ_string(const OccupancyMap& map) {
  std::ostringstream ss;
  write_occ(map, ss);
  return ss.str();
}

OccupancyMap read_occ(std::istream& in) {
  std::string magic, version;
  int w = 0, hgt = 0;
  double res = 0.0, ox = 0.0, oy = 0.0;
  if (!(in >> magic >> version >> w >> hgt >> res >> ox >> oy) || magic != "OCC" || version != "v1")
    throw FormatError("bad OCC header");
  if (w < 0 || hgt < 0 || !(res > 0.0)) throw FormatError("bad OCC dimensions");
  OccupancyMap map(res);
  const int x0 = static_cast<int>(std::lround(ox / res));
  const int y0 = static_cast<int>(std::lround(oy / res));
  if (w > 0 && hgt > 0) map.ensure_contains({x0, y0}, {x0 + w - 1, y0 + hgt - 1}, 0);
  std::string row;
  std::getline(in, row);
  for (int r = 0; r < hgt; ++r) {
    if (!std::getline(in, row) || static_cast<int>(row.size()) < w)
      throw FormatError("truncated OCC body");
    const int y = y0 + hgt - 1 - r;
    for (int x = 0; x < w; ++x) {
      switch (row[static_cast<std::size_t>(x)]) {
        case '.': map.raise({x0 + x, y}, Cell::Free); break;
        case '#': map.raise({x0 + x, y}, Cell::Obstacle); break;
        case '?': break;
        default: throw FormatError("bad OCC cell character");
      }
    }
  }
  return map;
}

}  // namespace absnav
