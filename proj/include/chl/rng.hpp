#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace chl {

// All randomness in the project flows through these helpers. The standard
// <random> distributions are implementation-defined, which would break the
// bit-reproducibility contract on checkpoints and reports across stdlibs,
// so the engine-to-value mappings are fixed here.
using RngEngine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream from a root seed and a path of indices
// (e.g. {epoch, batch, image}), so batch assembly order never matters.
inline RngEngine derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(seed);
  for (std::uint64_t p : path) s = splitmix64(s ^ (p + 0x9e3779b97f4a7c15ull));
  return RngEngine(s);
}

inline double uniform_real(RngEngine& rng, double lo, double hi) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
  return lo + (hi - lo) * u;
}

// Inclusive on both ends.
inline int uniform_int(RngEngine& rng, int lo, int hi) {
  if (hi <= lo) return lo;
  std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

inline bool bernoulli(RngEngine& rng, double p) {
  return uniform_real(rng, 0.0, 1.0) < p;
}

}  // namespace chl
