#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mnvc {

// Worker count: NVC_WORKERS if set and positive, else hardware concurrency.
inline unsigned default_workers() {
  if (const char* env = std::getenv("NVC_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(std::min(v, 256L));
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Work items are
// claimed dynamically, so fn must only write to state owned by item i.
// The first exception thrown by any item is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (n == 0) return;
  workers = std::max(1u, workers);
  if (workers == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::size_t spawn = std::min<std::size_t>(workers, n) - 1;
  std::vector<std::jthread> threads;
  threads.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t) threads.emplace_back(body);
  body();
  threads.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mnvc
