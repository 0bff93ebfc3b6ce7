#pragma once

#include <cstddef>
#include <functional>

namespace advlab {

/// Worker cap: an explicit override if set, else ADVLAB_THREADS (0 = auto).
std::size_t worker_count();

/// Overrides ADVLAB_THREADS for the current process; 0 restores env lookup.
void set_worker_override(std::size_t workers);

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// is executed exactly once; callers write results into per-index slots and
/// reduce afterwards in index order, so results do not depend on the worker
/// count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace advlab
