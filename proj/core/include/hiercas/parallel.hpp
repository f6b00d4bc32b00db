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

namespace hiercas {

/// Worker count: an explicit request wins, otherwise the hardware
/// concurrency. HIERCAS_THREADS, when set, caps either.
inline std::size_t resolve_threads(std::size_t requested = 0) {
  std::size_t n = requested > 0 ? requested
                                : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HIERCAS_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    } catch (const std::exception&) {
      // Unparsable cap: ignore.
    }
  }
  return std::max<std::size_t>(n, 1);
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; the first exception is rethrown after all
/// workers stop.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace hiercas
