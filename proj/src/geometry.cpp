#include "absnav/geometry.hpp"

#include <limits>

namespace absnav {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Parametric slab interval [t_near, t_far] of the ray against `r`.
bool slab_interval(Vec2 o, Vec2 d, const Rect& r, double& t_near, double& t_far) {
  t_near = -kInf;
  t_far = kInf;
  const double origin[2] = {o.x, o.y};
  const double dir[2] = {d.x, d.y};
  const double lo[2] = {r.x_min, r.y_min};
  const double hi[2] = {r.x_max, r.y_max};
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(dir[axis]) < 1e-15) {
      if (origin[axis] < lo[axis] || origin[axis] > hi[axis]) return false;
      continue;
    }
    double t0 = (lo[axis] - origin[axis]) / dir[axis];
    double t1 = (hi[axis] - origin[axis]) / dir[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return false;
  }
  return true;
}

}  // namespace

double ray_rect_distance(Vec2 origin, Vec2 dir, const Rect& r) {
  double t_near = 0.0;
  double t_far = 0.0;
  if (!slab_interval(origin, dir, r, t_near, t_far)) return kInf;
  if (t_far < 0.0) return kInf;
  return std::max(t_near, 0.0);
}

double ray_exit_distance(Vec2 origin, Vec2 dir, const Rect& r) {
  if (!r.contains(origin)) return kInf;
  double t_near = 0.0;
  double t_far = 0.0;
  if (!slab_interval(origin, dir, r, t_near, t_far)) return kInf;
  return t_far;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 <= 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

double segment_rect_distance(Vec2 a, Vec2 b, const Rect& r) {
  const Vec2 ab = b - a;
  const double len = norm(ab);
  if (len > 0.0) {
    const double hit = ray_rect_distance(a, ab * (1.0 / len), r);
    if (hit <= len) return 0.0;
  } else if (r.contains(a)) {
    return 0.0;
  }
  // Disjoint convex sets: the minimum is attained at a vertex of one of them.
  double best = std::min(point_rect_distance(a, r), point_rect_distance(b, r));
  const Vec2 corners[4] = {{r.x_min, r.y_min}, {r.x_max, r.y_min},
                           {r.x_max, r.y_max}, {r.x_min, r.y_max}};
  for (const Vec2& c : corners) best = std::min(best, point_segment_distance(c, a, b));
  return best;
}

}  // namespace absnav
