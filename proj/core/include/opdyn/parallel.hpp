#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace opdyn {

// Resolves a requested worker count. Zero means "ask the environment":
// OPDYN_THREADS if set, otherwise the hardware concurrency. OPDYN_THREADS
// also caps explicit requests.
int resolve_threads(int requested = 0);

// Runs body(j) for j in [0, count) on up to `threads` workers with a static
// round-robin assignment. The first exception thrown by any worker is
// rethrown on the calling thread after all workers finish.
template <typename F>
void parallel_for(std::size_t count, int threads, F&& body) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (threads == 1) {
    for (std::size_t j = 0; j < count; ++j) body(j);
    return;
  }
  std::exception_ptr failure;
  std::mutex guard;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t j = static_cast<std::size_t>(w); j < count;
             j += static_cast<std::size_t>(threads)) {
          body(j);
        }
      } catch (...) {
        std::lock_guard lock(guard);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace opdyn
