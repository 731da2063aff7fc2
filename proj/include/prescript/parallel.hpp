#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace prescript {

/// Resolves the worker count: PRESCRIPT_OPT_JOBS env var wins over `requested`;
/// zero or negative means "use all hardware threads".
inline unsigned effective_jobs(int requested) {
  if (const char* env = std::getenv("PRESCRIPT_OPT_JOBS")) {
    const int from_env = std::atoi(env);
    if (from_env > 0) return static_cast<unsigned>(from_env);
  }
  if (requested > 0) return static_cast<unsigned>(requested);
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
///
/// Work items must be independent; callers that aggregate results write into
/// pre-sized slots indexed by i so the reduction order, and therefore the
/// output, does not depend on the schedule. The first exception thrown by a
/// worker is rethrown on the calling thread after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (n == 0) return;
  if (jobs <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
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
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  std::vector<std::thread> threads;
  threads.reserve(count);
  for (unsigned t = 0; t < count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace prescript
