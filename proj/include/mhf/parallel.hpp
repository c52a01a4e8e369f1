#pragma once

#include <functional>

namespace mhf {

// Worker count: MHF_THREADS if set to a positive integer, else the hardware count.
[[nodiscard]] int thread_cap();

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index runs exactly once.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

}  // namespace mhf
