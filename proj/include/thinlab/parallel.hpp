#pragma once

#include <cstddef>
#include <functional>

namespace thinlab {

/// Worker count: THINLAB_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n).  Work is split across worker_count() threads;
/// callers must make fn(i) independent of execution order (per-index
/// substreams, disjoint output slots) so results match a serial run exactly.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace thinlab
