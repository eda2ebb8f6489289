#pragma once

#include <cstdint>
#include <functional>

namespace qgalore {

// Worker count for internal parallelism, bounded by the QGALORE_THREADS
// environment variable (default 1). Read once per process.
int thread_count();

// Runs fn(begin, end) over disjoint index ranges. Each index is processed by
// exactly one worker with the same per-index arithmetic as the sequential
// path, so results are bit-identical for any thread count.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace qgalore
