#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace gaussperc {

inline std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Evaluates fn(state, i) for i in [0, n) on `threads` workers, each owning a
/// state built by make_state(). Results come back indexed by i, so the output
/// does not depend on scheduling.
template <typename MakeState, typename Fn>
auto parallel_map(std::size_t n, std::size_t threads, MakeState&& make_state, Fn&& fn) {
  using State = decltype(make_state());
  using Result = decltype(fn(std::declval<State&>(), std::size_t{}));
  static_assert(!std::is_same_v<Result, bool>, "vector<bool> is not safe for concurrent writes");
  std::vector<Result> out(n);
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      auto state = make_state();
      for (std::size_t i = next++; i < n; i = next++) out[i] = fn(state, i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = n;
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace gaussperc
