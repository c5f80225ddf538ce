#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace difflik {

/// Worker count used by library loops. Defaults to DIFFLIK_THREADS when set,
/// else the hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Calls fn(i) for i in [0, n) over contiguous blocks, one per worker. The
/// first exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Like parallel_for but hands each worker its whole block [begin, end), so
/// per-worker scratch state can be set up once.
void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// Pairwise (tree) sum; the grouping depends only on v.size().
double pairwise_sum(const double* v, std::size_t n);
inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace difflik
