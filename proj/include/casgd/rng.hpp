// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace casgd {

/// Per-purpose random streams.
///
/// Every consumer of randomness derives its own engine from a 64-bit seed and
/// a stream tag, so that adding draws to one purpose (say, costs) never shifts
/// the sequence seen by another (say, data vectors). The engine is
/// std::mt19937_64 seeded through splitmix64 from the seed, the tag and an
/// optional sub-stream counter.
enum class Stream : std::uint64_t {
  kInstance = 1,
  kCost = 2,
  kPlanted = 3,
  kNoise = 4,
  kSampling = 5,
  kMonteCarlo = 6,
  kPool = 7,
  kMinibatch = 8,
  kOracle = 9,
};

using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline Engine make_engine(std::uint64_t seed, Stream stream,
                          std::uint64_t sub = 0) {
  const auto tag = static_cast<std::uint64_t>(stream);
  return Engine(splitmix64(splitmix64(seed ^ (tag * 0xD1B54A32D192ED03ULL)) + sub));
}

/// Uniform double in [0, 1) from the top 53 bits of one engine output.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by rejection, identical on every platform.
inline std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v = engine();
  while (v >= limit) v = engine();
  return v % bound;
}

}  // namespace casgd
