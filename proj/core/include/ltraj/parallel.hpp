#pragma once

#include <cstddef>
#include <functional>

namespace ltraj {

/// Worker count from LTRAJ_WORKERS, else hardware concurrency (>= 1).
std::size_t default_workers();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
/// visited exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace ltraj
