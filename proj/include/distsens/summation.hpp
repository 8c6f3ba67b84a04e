// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_SUMMATION_HPP
#define DISTSENS_SUMMATION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace distsens {

/// Process-wide cap on worker threads used by the library's parallel regions.
/// 0 restores the default (hardware concurrency). Every parallel region is
/// contracted to produce bitwise-identical results for any thread count.
void set_max_threads(int n);
int max_threads();

/// Run fn(block, begin, end) over the contiguous blocks
/// [b*block_size, min(n, (b+1)*block_size)), possibly concurrently.
/// fn must only write to block-private state for schedule independence.
void parallel_blocks(std::size_t n, std::size_t block_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)> &fn);

/// Neumaier-compensated sequential sum.
template <typename It>
double compensated_sum(It first, It last) {
  double sum = 0.0, comp = 0.0;
  for (It it = first; it != last; ++it) {
    const double x = static_cast<double>(*it);
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

/// Block size of the deterministic reduction tree. Fixed: it is part of the
/// bitwise-reproducibility contract (changing it changes low-order bits).
inline constexpr std::size_t kSumBlock = 4096;

/// Deterministic blocked compensated sum of term(i) over i in [0, n).
/// Terms are summed plainly within each fixed 4096-wide block and the block
/// results are combined with compensation in block order, so the value is
/// independent of how blocks are scheduled across threads.
template <typename TermFn>
double blocked_sum(std::size_t n, TermFn &&term, bool parallel = true) {
  if (n == 0) return 0.0;
  const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(nblocks, 0.0);
  auto body = [&](std::size_t b, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += term(i);
    partial[b] = s;
  };
  if (parallel && nblocks > 1) {
    parallel_blocks(n, kSumBlock, body);
  } else {
    for (std::size_t b = 0; b < nblocks; ++b) {
      body(b, b * kSumBlock, std::min(n, (b + 1) * kSumBlock));
    }
  }
  return compensated_sum(partial.begin(), partial.end());
}

}  // namespace distsens

#endif  // DISTSENS_SUMMATION_HPP
