#pragma once

#include <cstddef>
#include <functional>

namespace covdl {

// Upper bound on worker threads used by the library. 0 restores the default
// (hardware concurrency).
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Runs body(i) for i in [0, n). Iterations must be independent; results are
// identical for any thread count as long as body writes only its own slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace covdl
