#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedrlhf {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_path(std::string_view path) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : path) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seed of the stream identified by `path` under root `seed`. Every randomized
// task draws from its own stream so results never depend on scheduling order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view path) {
  return splitmix64(splitmix64(seed) ^ hash_path(path));
}

inline Rng make_stream(std::uint64_t seed, std::string_view path) {
  return Rng(derive_seed(seed, path));
}

}  // namespace fedrlhf
