// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/rng.hpp"

namespace distsens {

namespace {

// SplitMix64 step (Vigna). Bijective on 64-bit state.
std::uint64_t splitmix64(std::uint64_t &state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

RngSeed RngSeed::child(std::uint64_t id) const {
  // Hash the pair (stream, id) into a fresh stream id; the seed is shared so a
  // whole run remains a function of one master seed.
  std::uint64_t state = stream ^ 0xa0761d6478bd642fULL;
  (void)splitmix64(state);
  state ^= id * 0xe7037ed1a0b428dbULL;
  return RngSeed{seed, splitmix64(state)};
}

Rng::Rng(RngSeed s) {
  // Expand (seed, stream) into the 256-bit state. SplitMix64 guarantees the
  // state is never all-zero for any input pair.
  std::uint64_t state = s.seed;
  s_[0] = splitmix64(state);
  s_[1] = splitmix64(state);
  state ^= rotl(s.stream, 17) + 0x9e3779b97f4a7c15ULL;
  s_[2] = splitmix64(state);
  s_[3] = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  // Rejection-free multiply-shift would bias tiny n; plain rejection keeps
  // exact uniformity and is cheap for the n used here.
  const std::uint64_t limit = n * (UINT64_MAX / n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace distsens
