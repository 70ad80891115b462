#pragma once

#include <cstddef>
#include <functional>

namespace cfa {

// Process-wide worker count used by parallel_for. Defaults to 1.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Calls body(begin, end) on disjoint contiguous chunks covering [0, n).
// Callers write only to outputs owned by their chunk, so results do not
// depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cfa
