#pragma once

// Deterministic batch parallelism: a fixed chunking of [0, n) over a fixed
// worker count, so any ordered merge of per-worker results is reproducible
// for a given thread setting.

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace glitr {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return int(std::min(4u, hw == 0 ? 1u : hw));
}

// fn(worker, begin, end); chunks are contiguous and in worker order
inline void parallel_chunks(int n, int threads,
                            const std::function<void(int, int, int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, 0, n);
    return;
  }
  int chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    int begin = w * chunk, end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, w, begin, end);
  }
  for (auto& t : pool) t.join();
}

}  // namespace glitr
