#ifndef WAVETOMO_PARALLEL_HPP
#define WAVETOMO_PARALLEL_HPP

#include <functional>

namespace wavetomo {

// Worker count: WAVETOMO_WORKERS env var if set, else hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n). Work items must not share mutable state except
// through disjoint output slots; results are therefore deterministic regardless
// of scheduling. Falls back to a serial loop when n or worker_count() is 1.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace wavetomo

#endif
