#pragma once

#include <cstddef>
#include <functional>

namespace repsim {

// REPSIM_THREADS caps the hardware count.
unsigned default_workers();

// Runs fn(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace repsim
