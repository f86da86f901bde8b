#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace ratebal {

// Parallel map over independent trial indices.  Workers pull indices from a
// shared counter; callers write results into preallocated per-index slots and
// reduce in index order afterwards, so results do not depend on the worker
// count.
inline void parallel_for(long n, int workers,
                         const std::function<void(long)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  const int count = std::min<long>(workers, n);
  pool.reserve(count);
  for (int w = 0; w < count; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

inline int default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 2 : static_cast<int>(hw);
}

}  // namespace ratebal
