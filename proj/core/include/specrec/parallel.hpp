#pragma once

#include <cstddef>
#include <functional>

namespace specrec {

// Worker-thread cap. Resolution order: explicit set_max_threads() call,
// SPECREC_THREADS env var, hardware concurrency. Results of every parallel
// routine in this codebase are bitwise independent of the value.
int max_threads();
void set_max_threads(int n);

// Runs fn(i) for i in [0, n) across the worker pool. Each index is processed
// by exactly one worker with a fixed per-index execution order, so outputs
// written to disjoint locations are bitwise thread-count invariant.
void parallel_for(long n, const std::function<void(long)>& fn);

// Fixed-chunk variant for parallel reductions: the index range is split into
// `n_chunks` chunks whose boundaries depend only on (n, n_chunks); callers
// combine per-chunk partials in chunk order afterwards.
struct ChunkRange {
  long begin, end;
};
ChunkRange chunk_range(long n, int n_chunks, int chunk);
void parallel_chunks(long n, int n_chunks, const std::function<void(int, long, long)>& fn);

// Number of fixed chunks used by deterministic reductions (independent of the
// live thread count on purpose).
inline constexpr int kReductionChunks = 16;

}  // namespace specrec
