#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace pbev {

// Runs fn(begin, end) over a static partition of [0, n). The partition is a
// function of (n, threads) only and every index is processed by exactly one
// worker, so kernels whose per-index work is self-contained produce identical
// output for every thread count. fn must not throw.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || n < 2) {
    if (n > 0) fn(std::int64_t{0}, n);
    return;
  }
  const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::int64_t begin = static_cast<std::int64_t>(w) * chunk;
    const std::int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace pbev
