#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace bevseg {

// Half-open index range handed to one worker.
struct WorkRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t worker = 0;
};

// Splits [0, count) into `workers` contiguous ranges. The split depends only on
// (count, workers), never on scheduling, so per-range partial results can be
// merged in range order.
inline std::vector<WorkRange> partition_range(std::size_t count, std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(count, 1)));
  std::vector<WorkRange> ranges;
  ranges.reserve(workers);
  const std::size_t base = count / workers;
  const std::size_t extra = count % workers;
  std::size_t cursor = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    ranges.push_back({cursor, cursor + len, w});
    cursor += len;
  }
  return ranges;
}

// Runs fn(WorkRange) over a static partition of [0, count). The first worker
// runs on the calling thread. Exceptions are rethrown after all workers join,
// lowest worker index first.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  const auto ranges = partition_range(count, workers);
  if (ranges.size() == 1) {
    fn(ranges.front());
    return;
  }
  std::vector<std::exception_ptr> errors(ranges.size());
  {
    std::vector<std::jthread> threads;
    threads.reserve(ranges.size() - 1);
    for (std::size_t i = 1; i < ranges.size(); ++i) {
      threads.emplace_back([&, i] {
        try {
          fn(ranges[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    try {
      fn(ranges[0]);
    } catch (...) {
      errors[0] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace bevseg
