#pragma once

#include <cstdint>
#include <random>

namespace umate {

// One seeded generator per run; everything stochastic takes an Rng&
// explicitly so runs are reproducible end to end.
using Rng = std::mt19937_64;

inline double rand_normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(rng);
}

inline double rand_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

inline int rand_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(rng);
}

// splitmix64, used to derive independent per-sample seeds from a run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace umate
