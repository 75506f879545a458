// SPDX-License-Identifier: Apache-2.0

#include "reno/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace reno {

namespace {

std::atomic<int> g_override{0};

int default_threads()
{
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0)
    n = 1;
  if (const char* env = std::getenv("RENO_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0)
        n = std::min(n, cap);
    } catch (...) {
    }
  }
  return n;
}

}  // namespace

int worker_threads()
{
  const int forced = g_override.load();
  if (forced > 0)
    return forced;
  static const int n = default_threads();
  return n;
}

void set_worker_threads(int n) { g_override.store(std::max(0, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk)
{
  const std::size_t threads = std::min<std::size_t>(
    static_cast<std::size_t>(worker_threads()), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
  if (threads <= 1) {
    if (n > 0)
      fn(0, n);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end)
      pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(n, chunk));
  for (auto& th : pool)
    th.join();
}

}  // namespace reno
