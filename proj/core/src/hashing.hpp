#pragma once

// Portable deterministic hashing for seeded draws that must not depend on the
// standard library's distribution implementations.

#include <cstdint>
#include <string_view>

namespace flame::hashing {

// splitmix64 finalizer
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Uniform in [0, 1) from a seed and a salt.
inline double unit(std::uint64_t seed, std::uint64_t salt) {
  const std::uint64_t h = mix(seed ^ mix(salt * 0xD6E8FEB86659FD93ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace flame::hashing
