// parallel.hpp -- static partitioning of an index range over worker threads.
// Callers write results into preallocated per-index slots and reduce in index
// order afterwards, so outputs never depend on the worker count.

#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace qwork::detail {

inline int resolve_workers(int n_workers, std::int64_t total) {
  if (n_workers < 0) throw std::invalid_argument("resolve_workers: n_workers must be >= 0");
  int w = n_workers > 0 ? n_workers : static_cast<int>(std::thread::hardware_concurrency());
  w = std::clamp(w, 1, 64);
  return static_cast<int>(std::min<std::int64_t>(w, std::max<std::int64_t>(total, 1)));
}

// Invokes fn(lo, hi) on contiguous blocks covering [0, total).  The first
// exception thrown by any block is rethrown after all workers join.
template <class Fn>
inline void run_partitioned(std::int64_t total, int workers, Fn&& fn) {
  if (total <= 0) return;
  if (workers <= 1 || total == 1) {
    fn(std::int64_t{0}, total);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = total * w / workers;
    const std::int64_t hi = total * (w + 1) / workers;
    if (lo == hi) continue;
    pool.emplace_back([&fn, &failure, &failure_mu, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        const std::lock_guard<std::mutex> lk(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace qwork::detail
