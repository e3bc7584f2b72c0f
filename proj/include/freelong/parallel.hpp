#pragma once

#include <cstddef>
#include <functional>

namespace freelong {

// Worker count for internal loops; FREELONG_THREADS overrides the default
// of 1. Callers must write disjoint ranges per index so outputs are
// independent of the thread count.
std::size_t default_thread_count();

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace freelong
