#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace fqkl {

/// Static-chunk parallel loop. Work items write only to their own slots, so
/// results never depend on scheduling; callers that reduce afterwards do so
/// in index order.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t max_workers = 0) {
  if (n == 0) return;
  std::size_t workers = max_workers ? max_workers : std::thread::hardware_concurrency();
  workers = std::min(std::max<std::size_t>(workers, 1), n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fqkl
