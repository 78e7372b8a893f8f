#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace absnav {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Order-sensitive hash of a key tuple; every stochastic draw in the
/// simulator is seeded from one of these.
constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

constexpr std::uint64_t as_key(std::int64_t v) { return static_cast<std::uint64_t>(v); }

/// Small counter-based generator; satisfies UniformRandomBitGenerator so it
/// plugs into the <random> distributions.
class KeyedRng {
 public:
  using result_type = std::uint64_t;

  explicit KeyedRng(std::uint64_t seed) : state_(seed) {}
  KeyedRng(std::initializer_list<std::uint64_t> key) : state_(hash_key(key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : (*this)() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace absnav
