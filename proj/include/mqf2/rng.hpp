#pragma once

#include <cstdint>
#include <string_view>

namespace mqf2 {

/// Derives an independent seed for a named component (data, init, training,
/// sampling) from the run seed: FNV-1a over the name, mixed by splitmix64.
inline std::uint64_t substream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t x = seed ^ h;
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t substream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return substream(substream(seed, name) + index, "index");
}

}  // namespace mqf2
