#pragma once

#include <cstdint>
#include <random>

#include "satrl/math.hpp"

namespace satrl {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  // Fresh distribution per call: no hidden cache state, so copying an Rng
  // copies the full generator state.
  std::normal_distribution<double> d(mean, stddev);
  return d(rng);
}

// Uniform direction on the unit sphere via spherical coordinates.
inline Vec3 random_unit_vector(Rng& rng) {
  const double z = uniform(rng, -1.0, 1.0);
  const double phi = uniform(rng, 0.0, 2.0 * kPi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Splits a base seed into independent per-worker streams.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  // SplitMix64 step over base ^ index.
  uint64_t x = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

}  // namespace satrl
