// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace dasformer {

namespace detail {

// splitmix64 output function (Steele/Lea/Flood).
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9E3779B97F4A7C15ull + (b << 6) + (b >> 2) + b));
}

}  // namespace detail

/// Counter-based deterministic RNG: the stream is a pure function of
/// (seed, counter), so state serializes as two integers and random access
/// (resume, per-sample substreams) is O(1). Identical seed => identical
/// stream on every platform.
class RngState {
 public:
  RngState() = default;
  explicit RngState(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return detail::splitmix64(seed_ + 0xA0761D6478BD642Full * ++counter_); }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; consumes two draws.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Independent derived stream; path elements select substreams
  /// (epoch, step, sample, ...) without advancing this stream.
  RngState derive(std::initializer_list<std::uint64_t> path) const {
    std::uint64_t s = seed_;
    for (std::uint64_t p : path) s = detail::mix64(s, p);
    return RngState(s);
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace dasformer
