#pragma once

#include <cstdint>
#include <functional>

namespace tsfm {

// Worker cap: DEGRADE_TSFM_THREADS when set (>=1), else hardware concurrency.
int max_threads();

// Runs fn(i) for i in [0, n). Tasks must be independent; callers that need
// deterministic output store results by index and reduce in index order.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace tsfm
