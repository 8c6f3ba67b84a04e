// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_RNG_HPP
#define DISTSENS_RNG_HPP

#include <cstdint>

namespace distsens {

/// Identifies one reproducible random stream. (seed, stream) fully determines
/// the sequence; disjoint stream ids give statistically independent streams.
struct RngSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  /// Derive a child stream deterministically (bootstrap ids, restart ids,
  /// epoch ids...). Children of distinct parents never collide in practice:
  /// the mix is a bijective 64-bit hash chain.
  RngSeed child(std::uint64_t id) const;
};

/// xoshiro256++ 1.0, state seeded from (seed, stream) via SplitMix64.
/// Chosen over std::mt19937_64 because the full pipeline (seeding included)
/// is pinned here, independent of standard-library implementation details.
class Rng {
 public:
  explicit Rng(RngSeed s);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random mantissa bits.
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Name and version of the generator, recorded in serialized outputs.
  static const char *algorithm() { return "xoshiro256++-1.0/splitmix64"; }

 private:
  std::uint64_t s_[4];
};

}  // namespace distsens

#endif  // DISTSENS_RNG_HPP
