#pragma once

#include <cstddef>
#include <functional>

namespace lga {

/// Worker cap: LGA_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

/// Override for tests and the CLI. 0 restores the environment default.
void set_thread_count(std::size_t n);

/// Runs body(lo, hi) over disjoint chunks of [0, n). Chunks never share
/// output, so results do not depend on the thread count. Runs inline when
/// `work` (a rough op count) is too small to amortize thread start-up.
void parallel_for(std::size_t n, std::size_t work,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace lga
