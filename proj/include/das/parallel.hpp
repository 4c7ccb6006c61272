#pragma once

#include <cstddef>
#include <functional>

namespace das {

/// Worker cap for internal parallel loops (>= 1). Defaults to 1.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs; callers
/// reduce results in index order so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace das
