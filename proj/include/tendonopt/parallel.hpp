#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace tendonopt {

// Worker cap: TENDONOPT_THREADS when set, otherwise the hardware count.
inline int configured_threads() {
  if (const char* env = std::getenv("TENDONOPT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Splits [0, total) into contiguous chunks, one worker per chunk. The
// callback receives (begin, end, worker_index); worker_index is the chunk's
// position so reductions can merge partial results in a fixed order.
inline void parallel_chunks(
    std::size_t total, int max_workers,
    const std::function<void(std::size_t, std::size_t, int)>& body) {
  int workers = max_workers < 1 ? 1 : max_workers;
  if (static_cast<std::size_t>(workers) > total) workers = static_cast<int>(total);
  if (total == 0) return;
  if (workers <= 1) {
    body(0, total, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (total + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = static_cast<std::size_t>(w) * chunk;
    const std::size_t end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end, w] { body(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace tendonopt
