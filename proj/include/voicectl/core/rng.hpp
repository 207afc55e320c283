#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace voicectl {

/// 64-bit FNV-1a. Stable across platforms; used for cache keys and seeds.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed-derivation tree: every consumer derives its own seed from the parent
/// seed and a component name, so adding a consumer never shifts another's
/// stream.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  SeedTree child(std::string_view name) const { return SeedTree(splitmix64(fnv1a(name, seed_ ^ 0x5bd1e995ULL))); }
  SeedTree child(std::uint64_t index) const { return SeedTree(splitmix64(seed_ + splitmix64(index + 1))); }

  std::mt19937_64 engine() const { return std::mt19937_64(seed_); }

 private:
  std::uint64_t seed_;
};

}  // namespace voicectl
