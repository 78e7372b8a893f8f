#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "absnav/geometry.hpp"
#include "absnav/rng.hpp"
#include "absnav/world.hpp"

namespace absnav::testing {

inline Scene open_scene(double w, double h, std::uint64_t seed = 1) {
  Scene s;
  s.id = "test";
  s.width = w;
  s.height = h;
  s.seed = seed;
  return s;
}

inline ObjectInstance object(int id, int cls, Vec2 c, double r = 0.25) {
  ObjectInstance o;
  o.id = id;
  o.class_id = cls;
  o.centroid = c;
  o.radius = r;
  return o;
}

inline SensorConfig noiseless_sensor() {
  SensorConfig c;
  c.p_det = 1.0;
  c.p_fp = 0.0;
  c.sigma_pos = 0.0;
  return c;
}

/// Random axis-aligned walls with objects in free space. Not a generator
/// replacement, just clutter for property tests.
inline Scene cluttered_scene(std::uint64_t seed, int walls = 10, int objects = 8) {
  KeyedRng rng{seed, 0xC1077ULL};
  Scene s = open_scene(10.0, 10.0, seed);
  for (int i = 0; i < walls; ++i) {
    const double x = rng.uniform(0.5, 9.0);
    const double y = rng.uniform(0.5, 9.0);
    const bool horizontal = rng.uniform() < 0.5;
    const double len = rng.uniform(0.5, 3.0);
    Rect r = horizontal ? Rect{x, y, std::min(x + len, 9.9), y + 0.1} : Rect{x, y, x + 0.1, std::min(y + len, 9.9)};
    s.walls.push_back(r);
  }
  int id = 0;
  for (int tries = 0; id < objects && tries < 1000; ++tries) {
    const Vec2 c{rng.uniform(0.5, 9.5), rng.uniform(0.5, 9.5)};
    if (s.clearance(c) < 0.3) continue;
    s.objects.push_back(object(id, static_cast<int>(rng.below(8)), c));
    ++id;
  }
  return s;
}

/// True if the closed segment a-b touches any wall, by dense sampling.
inline bool sampled_blocked(const Scene& s, Vec2 a, Vec2 b, double step = 1e-3) {
  const double len = distance(a, b);
  const int n = static_cast<int>(std::ceil(len / step));
  for (int i = 0; i <= n; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / std::max(n, 1));
    for (const Rect& w : s.walls)
      if (w.contains(p)) return true;
  }
  return false;
}

}  // namespace absnav::testing
