#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <future>
#include <vector>

namespace cotdr::detail {

// Run fn(i) for every i in [0, count). With parallelism <= 1 this is a plain
// loop; otherwise indices are striped across std::async workers. Callers get
// identical results either way because every index is computed independently
// and written to its own slot. If several tasks throw, the surviving
// exception is picked by worker order, so it too is deterministic.
template <typename Fn>
void parallel_for(std::size_t count, int parallelism, Fn&& fn) {
  if (parallelism <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min(count, static_cast<std::size_t>(parallelism));
  std::vector<std::future<void>> tasks;
  tasks.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    tasks.push_back(std::async(std::launch::async, [&fn, w, workers, count] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    }));
  }
  std::exception_ptr first;
  for (auto& t : tasks) {
    try {
      t.get();
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace cotdr::detail
