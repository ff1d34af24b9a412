#pragma once

#include <cstddef>
#include <functional>

namespace ife {

/// Worker count: `requested` if positive, else the IFE_THREADS environment
/// variable, else the hardware concurrency (at least 1).
int resolve_threads(int requested);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// run exactly once; the first exception is rethrown after all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace ife
