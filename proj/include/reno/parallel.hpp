// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace reno {

/// Worker thread count: hardware concurrency, capped by RENO_THREADS.
int worker_threads();

/// Overrides the worker count for this process (0 restores the default).
void set_worker_threads(int n);

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks never
/// overlap, so per-row work stays bitwise identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk = 256);

}  // namespace reno
