#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace framers {

// All randomness flows through mt19937_64 plus the hand-rolled draws below.
// The standard library's distribution objects are implementation-defined, so
// we avoid them; this keeps seeded runs reproducible across toolchains.
using Rng = std::mt19937_64;

/// Derives an independent stream from (seed, tag, index).
inline Rng make_rng(std::uint64_t seed, std::uint64_t tag,
                    std::uint64_t index = 0) {
  std::seed_seq seq{seed, tag, index};
  return Rng(seq);
}

// Stream tags. One tag per consumer so adding a draw in one place never
// shifts another stream.
enum RngTag : std::uint64_t {
  kTagData = 1,
  kTagMask = 2,
  kTagInit = 3,
  kTagTrain = 4,
  kTagDropout = 5,
  kTagPolicy = 6,
  kTagSplit = 7,
};

/// Uniform integer in [0, n), unbiased (rejection sampling).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) {
  return std::ldexp(static_cast<double>(rng() >> 11), -53);
}

/// Uniform double in [lo, hi).
inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

/// Standard normal via Box-Muller. Draws two uniforms per call.
inline double normal_unit(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace framers
