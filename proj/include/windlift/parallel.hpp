#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace windlift {

/// Worker cap from WINDLIFT_THREADS; defaults to the hardware concurrency.
inline unsigned worker_threads() {
  if (const char* env = std::getenv("WINDLIFT_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(chunk, begin, end) over contiguous chunks of [0, n). Chunk
/// boundaries depend only on n and the worker count, so results assembled
/// per chunk are reproducible for a fixed thread setting.
template <class Fn>
void parallel_chunks(std::size_t n, Fn&& fn, std::size_t min_chunk = 512) {
  const std::size_t workers = std::min<std::size_t>(worker_threads(), std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t per = (n + workers - 1) / workers;
  for (std::size_t c = 0; c < workers; ++c) {
    const std::size_t begin = c * per;
    const std::size_t end = std::min(n, begin + per);
    if (begin >= end) break;
    pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
}

}  // namespace windlift
