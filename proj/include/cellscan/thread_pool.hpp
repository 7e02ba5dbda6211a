#pragma once

#include <cstddef>
#include <functional>

namespace cellscan {

// Caps the worker count of the process-wide pool. 0 restores the default
// (hardware concurrency). Takes effect on the next parallel_for call.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs fn(begin, end) over a static partition of [0, n) on the pool.
// Callers must write disjoint outputs per index; each index is processed by
// exactly one worker with its own sequential inner order, so results never
// depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace cellscan
