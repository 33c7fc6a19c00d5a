// parallel.hpp
// Minimal fan-out helper. Work items are independent; callers own any output
// slots, so results are deterministic regardless of scheduling.

#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

#include "defsurf/types.hpp"

namespace defsurf {

inline int default_thread_count() {
  if (const char* env = std::getenv("DEFSURF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

template <typename F>
void parallel_for(Index begin, Index end, F&& f,
                  int threads = default_thread_count()) {
  const Index n = end - begin;
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (Index i = begin; i < end; ++i) f(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Index>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Index chunk = (n + workers - 1) / workers;
  for (int t = 0; t < workers; ++t) {
    const Index lo = begin + t * chunk;
    const Index hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f] {
      for (Index i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace defsurf
