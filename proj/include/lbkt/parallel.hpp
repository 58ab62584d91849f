#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace lbkt {

/// Runs f(i) for i in [0, n) on up to `threads` workers with a static
/// round-robin assignment. The first exception is rethrown on the caller.
template <typename F>
void parallel_for(int n, int threads, F&& f) {
  threads = std::clamp(threads, 1, std::max(n, 1));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  {
    std::vector<std::jthread> workers;
    workers.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (int i = w; i < n; i += threads) f(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace lbkt
