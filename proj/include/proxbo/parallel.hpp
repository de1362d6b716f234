#pragma once

#include <cstddef>
#include <functional>

namespace proxbo {

/// Worker cap: PROXBO_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t thread_limit();

/// Runs fn(0..n-1) on up to thread_limit() threads. Each index runs exactly
/// once; callers write results into index-addressed slots so the merge is
/// deterministic. Nested calls run serially. The exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace proxbo
