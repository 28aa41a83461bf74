#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace idm {

inline int resolve_workers(int requested, int n_items) {
  int w = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  return std::min(w, std::max(1, n_items));
}

// Contiguous partition of [0, n) across workers; worker w gets a fixed range
// independent of scheduling, so any ordered reduction is reproducible.
// The lowest-indexed worker exception is rethrown after all threads join.
inline void parallel_ranges(int n, int workers, const std::function<void(int, int, int)>& fn) {
  workers = std::min(std::max(workers, 1), std::max(n, 1));
  if (workers == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  threads.reserve(workers);
  const int base = n / workers, extra = n % workers;
  int begin = 0;
  for (int w = 0; w < workers; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    threads.emplace_back([&fn, &errors, w, begin, len] {
      try {
        fn(w, begin, begin + len);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
    begin += len;
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace idm
