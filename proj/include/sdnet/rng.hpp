#pragma once

#include <cstdint>
#include <random>

namespace sdnet {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from (seed, index) with a splitmix64 step,
/// so per-sample and per-resample streams do not depend on evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t index) { return Rng(derive_seed(seed, index)); }

/// Uniform draw in [0,1) built from raw engine bits; unlike
/// std::uniform_real_distribution its output is identical across standard libraries.
inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

}  // namespace sdnet
