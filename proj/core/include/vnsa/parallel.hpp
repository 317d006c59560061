#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace vnsa {

/// Kernel execution knobs. Results never depend on `threads`: work is split
/// over independent output rows and every reduction stays inside one row.
struct ExecOptions {
  unsigned threads = 1;
};

/// Runs fn(i) for i in [0, n) over contiguous static chunks.
template <typename Fn>
void parallel_for(std::size_t n, const ExecOptions& opts, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, opts.threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t end = std::min(n, (w + 1) * chunk);
        for (std::size_t i = w * chunk; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace vnsa
