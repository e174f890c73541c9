#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace distana {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent child seed from a parent seed and a stream name,
/// optionally indexed (e.g. per sequence). Serial and parallel callers that
/// use the same (name, index) get the same stream.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(parent ^ h) + splitmix64(index + 1));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t parent, std::string_view name, std::uint64_t index = 0) {
  return Rng(derive_seed(parent, name, index));
}

}  // namespace distana
