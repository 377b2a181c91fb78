#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace certibias {

// Worker budget: hardware concurrency, optionally capped by CERTIBIAS_THREADS.
inline int thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("CERTIBIAS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0') hw = v > 0 ? std::min(hw, static_cast<unsigned>(v)) : 1u;
  }
  return static_cast<int>(hw);
}

// Runs fn(i) for every i in [0, n). Results must depend on i alone (each
// iteration owns its output slot), which keeps them independent of the
// worker count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  if (n <= 0) return;
  const std::int64_t workers = std::min<std::int64_t>(thread_budget(), n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr err;
  std::mutex err_mu;
  for (std::int64_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::int64_t lo = w * n / workers;
      const std::int64_t hi = (w + 1) * n / workers;
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        const std::scoped_lock lock(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace certibias
