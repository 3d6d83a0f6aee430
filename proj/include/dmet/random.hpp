#pragma once

#include <cstdint>
#include <random>

namespace dmet {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent random streams used by the pipeline. Every stream is
/// derived from a single user seed as
///   derive_seed(seed, stream, index) = splitmix64(splitmix64(seed ^ stream) + index)
/// so the same (seed, stream, index) triple always yields the same generator.
enum class SeedStream : std::uint64_t {
  simulate = 0x51u,
  initial_state = 0x52u,
  quality = 0x53u,
  cluster = 0x61u,
  subsample = 0x62u,
  permutation = 0x63u,
};

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(stream)) + index);
}

}  // namespace dmet
