#pragma once

#include <cstdint>
#include <random>

namespace fedmpa {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds from (base, tag).
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform double in [0, 1) from the top 53 bits. Unlike
// std::uniform_real_distribution the sequence is identical on every
// standard library.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on uniform01.
double standard_normal(Rng& rng);

// Stream tags for mix_seed.
namespace seed_tag {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kPartition = 3;
inline constexpr std::uint64_t kClientBase = 1000;
}  // namespace seed_tag

}  // namespace fedmpa
