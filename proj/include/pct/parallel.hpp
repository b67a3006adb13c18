#pragma once

#include <functional>

namespace pct {

/// Worker count: PCT_THREADS env var caps parallelism, 0 or unset = all cores.
int thread_budget();

/// Runs fn(i) for i in [0, n). Work is distributed over the thread budget;
/// fn must not touch shared mutable state except through its own index slot.
/// Results written into index-addressed slots are deterministic regardless of
/// the number of threads.
void parallel_for(int n, const std::function<void(int)>& fn);

} // namespace pct
