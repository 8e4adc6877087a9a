#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace baforge {

// Runs fn(i) for i in [0, n) across up to hardware_concurrency() threads.
// fn must touch only per-index state; the first exception thrown by any
// index is rethrown on the calling thread after all workers finish.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  const unsigned hw = std::thread::hardware_concurrency();
  const size_t n_threads = std::min<size_t>(hw ? hw : 1, n);
  if (n_threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace baforge
