#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gb {

/// Worker count: GAUSS_BUBBLES_THREADS if set, otherwise the hardware
/// concurrency. Never affects numerical results.
int thread_count();
void set_thread_count(int threads);

namespace detail {
bool& inside_parallel_region();
}

/// Evaluates fn(i) for i in [0, count) on the worker pool and returns the
/// results in index order. Nested calls run serially on the calling thread.
template <class Result, class Fn>
std::vector<Result> map_indices(std::uint64_t count, Fn&& fn) {
  std::vector<Result> results(count);
  const int workers = static_cast<int>(
      std::min<std::uint64_t>(static_cast<std::uint64_t>(thread_count()), count));
  if (workers <= 1 || detail::inside_parallel_region()) {
    for (std::uint64_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    detail::inside_parallel_region() = true;
    for (std::uint64_t i = next++; i < count; i = next++) {
      try {
        results[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
    detail::inside_parallel_region() = false;
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace gb
