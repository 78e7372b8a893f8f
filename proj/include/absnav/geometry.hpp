#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace absnav {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle into [-pi, pi).
inline double normalize_angle(double theta) {
  double t = std::fmod(theta + kPi, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  t -= kPi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (t >= kPi) t -= kTwoPi;
  return t;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Agent position and heading. theta is kept in [-pi, pi).
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  constexpr Vec2 position() const { return {x, y}; }
  constexpr bool operator==(const Pose&) const = default;
};

inline Pose make_pose(double x, double y, double theta) {
  return {x, y, normalize_angle(theta)};
}

/// Rigid 2D motion p -> R(rotation) p + translation.
struct FrameTransform {
  double rotation = 0.0;
  Vec2 translation{};

  static FrameTransform identity() { return {}; }

  /// The transform that takes `from` exactly onto `to`.
  static FrameTransform aligning(const Pose& from, const Pose& to) {
    FrameTransform t;
    t.rotation = normalize_angle(to.theta - from.theta);
    t.translation = to.position() - rotate(from.position(), t.rotation);
    return t;
  }

  Vec2 apply(Vec2 p) const { return rotate(p, rotation) + translation; }

  Pose apply(const Pose& p) const {
    const Vec2 q = apply(p.position());
    return {q.x, q.y, normalize_angle(p.theta + rotation)};
  }

  FrameTransform inverse() const {
    FrameTransform inv;
    inv.rotation = normalize_angle(-rotation);
    inv.translation = rotate(translation, inv.rotation) * -1.0;
    return inv;
  }

  /// (*this) after `first`: x -> this(first(x)).
  FrameTransform compose(const FrameTransform& first) const {
    FrameTransform out;
    out.rotation = normalize_angle(rotation + first.rotation);
    out.translation = apply(first.translation);
    return out;
  }

  bool is_finite() const {
    return std::isfinite(rotation) && std::isfinite(translation.x) &&
           std::isfinite(translation.y);
  }
};

/// Expresses `p` (scene frame) relative to `origin` (scene frame).
inline Pose relative_pose(const Pose& origin, const Pose& p) {
  const Vec2 d = rotate(p.position() - origin.position(), -origin.theta);
  return {d.x, d.y, normalize_angle(p.theta - origin.theta)};
}

/// Axis-aligned rectangle, min corner inclusive.
struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(Vec2 p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  Vec2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
};

/// Distance from a point to a rectangle (0 inside).
inline double point_rect_distance(Vec2 p, const Rect& r) {
  const double dx = std::max({r.x_min - p.x, 0.0, p.x - r.x_max});
  const double dy = std::max({r.y_min - p.y, 0.0, p.y - r.y_max});
  return std::hypot(dx, dy);
}

/// Ray/rectangle entry distance via slabs; +inf when missed. A ray starting
/// inside the rectangle returns 0.
double ray_rect_distance(Vec2 origin, Vec2 dir, const Rect& r);

/// Exit distance of a ray starting inside `r`; +inf if origin is outside.
double ray_exit_distance(Vec2 origin, Vec2 dir, const Rect& r);

/// Minimum distance between segment [a, b] and rectangle `r`.
double segment_rect_distance(Vec2 a, Vec2 b, const Rect& r);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

}  // namespace absnav
