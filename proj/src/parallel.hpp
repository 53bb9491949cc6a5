#pragma once

#include <cstddef>
#include <functional>

namespace arcvq {

// Global cap on internal data parallelism. Defaults to 1 so that runs are
// reproducible without any flags; row-partitioned kernels give bit-identical
// results at any thread count because each output element keeps its serial
// accumulation order.
void set_threads(int n);
int threads();

// Runs fn(begin, end) over disjoint chunks of [0, n). Serial when threads()==1
// or the range is small.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace arcvq
