#pragma once

#include <functional>

namespace figmm {

int hardware_threads();

// Runs fn(i) for every i in [0, count) across up to `threads` worker threads
// in contiguous blocks. Callers keep results schedule-independent by writing
// only to per-index output slots. The first exception thrown by any worker is
// rethrown on the calling thread after all workers join.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace figmm
