#pragma once

#include <cstdint>
#include <functional>

namespace dastgcn {

/// Worker count: DASTGCN_THREADS when set, machine parallelism otherwise.
int64_t worker_count();

/// Runs fn(0..n-1), strided across workers. Callers own determinism: write
/// into per-index slots and reduce in index order afterwards.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace dastgcn
