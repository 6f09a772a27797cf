#pragma once

#include <functional>

namespace rasterfix {

/// Global worker cap; defaults to hardware concurrency, overridable by the
/// RASTERFIX_THREADS environment variable or set_max_threads().
int max_threads();
void set_max_threads(int n);

/// Runs fn(index) for index in [begin, end). Each index must write only its
/// own output slot; results are then independent of the thread count.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace rasterfix
