#pragma once

#include <cstddef>
#include <functional>

namespace sair {

/// Worker count from SAIR_THREADS, else the hardware concurrency (at least 1).
int default_thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is claimed dynamically, so
/// callers must not depend on which worker runs which index. Rethrows the first exception.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace sair
