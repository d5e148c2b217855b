#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace prodigy {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a sub-stream identified by a path of integers, e.g. (seed, step, episode).
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = 0x51ed270b27a1f3c5ULL;
  for (auto v : path) h = mix64(h ^ mix64(v));
  return h;
}

inline Rng derive_rng(std::initializer_list<std::uint64_t> path) { return Rng(derive_seed(path)); }

/// Uniform index in [0, n).
inline std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline bool bernoulli(double p, Rng& rng) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

/// k distinct indices from [0, n) by partial Fisher-Yates, in draw order. Requires k <= n.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + uniform_index(n - i, rng);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace prodigy
