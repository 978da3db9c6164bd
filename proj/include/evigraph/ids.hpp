#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace evigraph {

/// 64-bit FNV-1a. Stable across platforms; node and edge ids derive from it
/// so that re-ingesting the same bytes reproduces the same graph.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string make_id(std::string_view prefix, std::string_view key) {
  return std::string(prefix) + hex64(fnv1a64(key));
}

}  // namespace evigraph
