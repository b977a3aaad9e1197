#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spasm {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// thrown by any task is rethrown after all workers have joined; remaining
// tasks still run.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (n == 0) return;
  if (workers == 1) {
    std::exception_ptr first;
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first) first = std::current_exception();
          }
        }
      });
    }
  }
  if (first) std::rethrow_exception(first);
}

// Hands results to `sink` in index order even when they complete out of
// order, so incremental output stays deterministic under parallelism.
template <typename T, typename Sink>
class OrderedFlusher {
public:
  OrderedFlusher(std::size_t n, Sink sink) : slots_(n), ready_(n, false), sink_(std::move(sink)) {}

  void complete(std::size_t i, T value) {
    std::lock_guard lock(mutex_);
    slots_[i] = std::move(value);
    ready_[i] = true;
    while (next_ < slots_.size() && ready_[next_]) {
      sink_(slots_[next_]);
      ++next_;
    }
  }

  std::vector<T> take() { return std::move(slots_); }

private:
  std::vector<T> slots_;
  std::vector<bool> ready_;
  std::size_t next_ = 0;
  Sink sink_;
  std::mutex mutex_;
};

} // namespace spasm
