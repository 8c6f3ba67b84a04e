// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/summation.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace distsens {

namespace {

std::atomic<int> g_max_threads{0};

int default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() {
  const int n = g_max_threads.load();
  return n == 0 ? default_threads() : n;
}

void parallel_blocks(std::size_t n, std::size_t block_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)> &fn) {
  if (n == 0) return;
  const std::size_t nblocks = (n + block_size - 1) / block_size;
  const std::size_t nthreads =
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()), nblocks);
  if (nthreads <= 1) {
    for (std::size_t b = 0; b < nblocks; ++b) {
      fn(b, b * block_size, std::min(n, (b + 1) * block_size));
    }
    return;
  }
  // Blocks are claimed dynamically; correctness does not depend on which
  // thread runs which block because fn writes only block-private state.
  // Exceptions are captured and rethrown on this thread; when several blocks
  // throw, the one with the lowest block index wins so the report is stable.
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr err;
  std::size_t err_block = nblocks;
  auto worker = [&]() {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= nblocks) return;
      try {
        fn(b, b * block_size, std::min(n, (b + 1) * block_size));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (b < err_block) {
          err_block = b;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads - 1);
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace distsens
