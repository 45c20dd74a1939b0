#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace vllr {

// Stateless counter-based randomness. Every draw is a pure function of
// (seed, stream, episode, step), so estimators and rollout workers never
// share generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t episode, std::uint64_t step) {
  return hash_combine(hash_combine(hash_combine(splitmix64(seed), stream), episode),
                      step);
}

// Uniform in [0, 1) with 53 bits of resolution.
inline double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t episode, std::uint64_t step) {
  return to_unit(counter_hash(seed, stream, episode, step));
}

// Box-Muller over two independent counter draws.
inline double counter_gaussian(std::uint64_t seed, std::uint64_t stream,
                               std::uint64_t episode, std::uint64_t step) {
  const std::uint64_t h = counter_hash(seed, stream, episode, step);
  const double u1 = 1.0 - to_unit(h);  // (0, 1]
  const double u2 = to_unit(splitmix64(h));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// FNV-1a, used for content hashes of configs and parameter blobs.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace vllr
