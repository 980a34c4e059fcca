#pragma once

#include <cstddef>
#include <functional>

namespace sparsesplat {

/// Worker count used by every parallel loop in the library. Values < 1 reset
/// to the hardware concurrency.
void set_num_threads(int n);
int num_threads();

/// Splits [0, n) into at most num_threads() contiguous chunks and runs
/// fn(begin, end) on each. Callers write only to disjoint slots, so results do
/// not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace sparsesplat
