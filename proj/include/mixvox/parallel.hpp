#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mixvox {

/// Worker count: `requested` if positive, else MIXVOXELS_THREADS, else the
/// hardware concurrency.
int resolve_threads(int requested);

/// Splits [0, n) into `threads` contiguous ranges and runs
/// fn(worker, begin, end) for each. Range boundaries depend only on n and
/// the worker count, so per-worker results can be reduced in a fixed order.
template <class F>
void parallel_for(size_t n, int threads, F&& fn) {
  const size_t w = std::max<size_t>(1, std::min<size_t>(size_t(std::max(threads, 1)), n));
  if (w <= 1) {
    if (n > 0) fn(size_t(0), size_t(0), n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(w);
  pool.reserve(w - 1);
  auto run = [&](size_t k) {
    try {
      fn(k, n * k / w, n * (k + 1) / w);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  for (size_t k = 1; k < w; ++k) pool.emplace_back(run, k);
  run(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mixvox
