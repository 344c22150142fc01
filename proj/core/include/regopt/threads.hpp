#pragma once

#include <cstdint>
#include <functional>

namespace regopt {

/// Worker cap: min(REGOPT_THREADS, hardware concurrency); at least 1.
int max_threads();

/// Override the worker cap (0 restores the environment default).
void set_max_threads(int n);

// Runs fn(begin, end) over fixed-size chunks of [0, count). Chunk boundaries do
// not depend on the thread count, so per-chunk outputs (and any reduction done
// in chunk order) are identical for serial and parallel execution.
void parallel_for_chunks(std::int64_t count, std::int64_t chunk,
                         const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace regopt
