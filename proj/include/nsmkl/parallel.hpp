#pragma once

#include <cstddef>
#include <functional>

namespace nsmkl {

/// Worker count: NSMKL_THREADS if set and positive, otherwise the hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [begin, end) over up to thread_count() threads.
/// Each index is visited exactly once; callers write disjoint outputs, so results do
/// not depend on scheduling.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

}  // namespace nsmkl
