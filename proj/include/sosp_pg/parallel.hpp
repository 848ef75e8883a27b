#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "sosp_pg/types.hpp"

namespace sosp_pg {

/// Worker cap used by every batch operation. 0 means hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Calls fn(i) for i in [0, n). Each index runs exactly once; callers write
/// into per-index slots so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Fixed-shape pairwise summation tree. The grouping depends only on the
/// number of terms, so the result is bit-stable across thread counts.
double pairwise_sum(const std::vector<double>& terms);
Vector pairwise_sum(const std::vector<Vector>& terms);
Matrix pairwise_sum(const std::vector<Matrix>& terms);

}  // namespace sosp_pg
