#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mrf {

inline auto resolve_threads(std::size_t requested) -> std::size_t
{
  if (requested > 0) { return requested; }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n) on `threads` workers pulling fixed-size
/// chunks from a shared counter. Each index is visited exactly once, so
/// results written to slot i do not depend on scheduling. The first
/// exception thrown by any worker is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn &&fn, std::size_t chunk = 1)
{
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; i++) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool>        failed{false};
  std::exception_ptr       error;
  std::mutex               error_mutex;
  auto                     worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      std::size_t const start = next.fetch_add(chunk);
      if (start >= n) { break; }
      std::size_t const stop = std::min(n, start + chunk);
      try {
        for (std::size_t i = start; i < stop; i++) {
          fn(i);
        }
      } catch (...) {
        std::lock_guard lock{error_mutex};
        if (!error) { error = std::current_exception(); }
        failed = true;
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; t++) {
    pool.emplace_back(worker);
  }
  pool.clear();
  if (error) { std::rethrow_exception(error); }
}

} // namespace mrf
