#pragma once

#include <cstddef>
#include <functional>

namespace lavender {

// Worker cap: min(hardware_concurrency, LAVENDER_THREADS if set). At least 1.
size_t worker_count();

// Runs body(i) for i in [0, n), statically partitioned over worker_count()
// threads. Callers must make iterations independent; results written by
// index stay deterministic regardless of thread count. The first exception
// thrown by any iteration is rethrown in the calling thread.
void parallel_for(size_t n, const std::function<void(size_t)>& body);

}  // namespace lavender
