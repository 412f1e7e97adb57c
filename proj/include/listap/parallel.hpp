#pragma once

#include <cstddef>
#include <functional>

namespace listap {

// Worker count from LISTWISE_AP_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

// Runs body(i) for i in [0, n). Work is split into contiguous index blocks, so
// callers that write to slot i and reduce afterwards in index order get results
// independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace listap
