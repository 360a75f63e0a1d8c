#pragma once

#include <cstddef>
#include <functional>

namespace claimcast {

// Run fn(0) .. fn(n-1) on a bounded pool of `workers` threads. The first
// exception thrown by any task is rethrown on the calling thread after all
// workers have stopped. workers <= 1 runs inline.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace claimcast
