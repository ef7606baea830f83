#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gsb {

// Stateless counter-based generator: every draw is a pure function of its key,
// so results do not depend on evaluation order or thread scheduling.
namespace rng {

inline constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t key(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix(seed ^ 0x243f6a8885a308d3ULL);
  h = mix(h ^ stream);
  h = mix(h ^ a);
  h = mix(h ^ b);
  return mix(h ^ c);
}

// Uniform in the open interval (0, 1).
inline double uniform(std::uint64_t k) {
  return (static_cast<double>(k >> 11) + 0.5) * 0x1.0p-53;
}

inline double normal(std::uint64_t k) {
  const double u1 = uniform(k);
  const double u2 = uniform(mix(k ^ 0x5851f42d4c957f2dULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Uniform index in [0, n); n > 0.
inline std::uint64_t index(std::uint64_t k, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform(k) * static_cast<double>(n)) % n;
}

// Stream tags separating independent uses of one seed.
enum Stream : std::uint64_t {
  kForwardNoise = 1,
  kBackwardNoise = 2,
  kBridgeNoise = 3,
  kInit = 4,
  kResample = 5,
  kMinibatch = 6,
  kDataset = 7,
};

}  // namespace rng
}  // namespace gsb
