#pragma once

#include <cstdint>
#include <span>

namespace mfc::rng {

// SplitMix64 finalizer. Counter-based: every random draw in the simulator is
// a pure function of (seed, rollout, stage, agent), so streams are portable
// across platforms and reimplementations, and rollouts can run in parallel
// without shared generator state.
inline constexpr std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

inline constexpr std::uint64_t stream(std::uint64_t seed, std::uint64_t rollout,
                                      std::uint64_t stage, std::uint64_t agent) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ rollout);
  h = mix(h ^ stage);
  h = mix(h ^ agent);
  return h;
}

// Uniform double in [0, 1) using the top 53 bits.
inline constexpr double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double draw(std::uint64_t seed, std::uint64_t rollout, std::uint64_t stage,
                   std::uint64_t agent) {
  return to_unit(stream(seed, rollout, stage, agent));
}

// Inverse-CDF sample from a probability row. Falls back to the last positive
// entry when accumulated round-off leaves u above the final cumulative sum.
inline int sample_row(std::span<const double> row, double u) {
  double acc = 0.0;
  int last_positive = 0;
  for (int y = 0; y < static_cast<int>(row.size()); ++y) {
    if (row[y] > 0.0) last_positive = y;
    acc += row[y];
    if (u < acc) return y;
  }
  return last_positive;
}

}  // namespace mfc::rng
