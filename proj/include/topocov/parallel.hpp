#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace topocov {

// Runs fn(k) for k in [0, n) on up to `workers` threads. Tasks write their own
// result slots; callers reduce in index order, so results never depend on the
// worker count. The first exception thrown by any task is rethrown.
template <class Fn>
void parallel_for(long n, int workers, Fn&& fn) {
  if (n <= 0) return;
  int nthreads = static_cast<int>(std::min<long>(std::max(1, workers), n));
  if (nthreads == 1) {
    for (long k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      long k = next.fetch_add(1);
      if (k >= n) return;
      try {
        fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < nthreads; ++i) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace topocov
