#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ddpolab::detail {

// Runs body(i) for i in [0, n) across up to `threads` workers using a stride
// partition. The first exception thrown by any worker is rethrown here.
// Results must be written to disjoint per-index slots; the partition is a pure
// performance choice, so output is identical for every thread count.
template <typename Body>
void parallel_for(std::size_t n, int threads, const Body& body) {
  if (n == 0) return;
  const std::size_t nt =
      std::min<std::size_t>(threads < 1 ? 1 : static_cast<std::size_t>(threads), n);
  if (nt == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::mutex mu;
  std::exception_ptr first_error;
  auto worker = [&](std::size_t begin) {
    try {
      for (std::size_t i = begin; i < n; i += nt) body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t k = 0; k < nt; ++k) pool.emplace_back(worker, k);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ddpolab::detail
