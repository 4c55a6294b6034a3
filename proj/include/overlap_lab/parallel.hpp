#pragma once

#include <cstddef>
#include <functional>

namespace overlap_lab {

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Work items are
/// claimed dynamically; callers write results into per-index slots so the
/// outcome never depends on scheduling. The first exception thrown by any
/// item is rethrown after all threads join.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body);

/// Job count from OVERLAP_LAB_JOBS, falling back to hardware concurrency.
int default_jobs();

}  // namespace overlap_lab
