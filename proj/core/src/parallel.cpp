#include "specrec/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace specrec {

namespace {
int resolve_default() {
  if (const char* env = std::getenv("SPECREC_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}
std::atomic<int> g_max_threads{0};
}  // namespace

int max_threads() {
  int n = g_max_threads.load(std::memory_order_relaxed);
  if (n == 0) {
    n = resolve_default();
    g_max_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_max_threads(int n) { g_max_threads.store(std::max(1, n), std::memory_order_relaxed); }

void parallel_for(long n, const std::function<void(long)>& fn) {
  int nt = std::min<long>(max_threads(), n);
  if (nt <= 1) {
    for (long i = 0; i < n; i++) fn(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
  for (long i = 0; i < n; i++) fn(i);
#else
  for (long i = 0; i < n; i++) fn(i);
#endif
}

ChunkRange chunk_range(long n, int n_chunks, int chunk) {
  long base = n / n_chunks, rem = n % n_chunks;
  long begin = chunk * base + std::min<long>(chunk, rem);
  long len = base + (chunk < rem ? 1 : 0);
  return {begin, begin + len};
}

void parallel_chunks(long n, int n_chunks, const std::function<void(int, long, long)>& fn) {
  parallel_for(n_chunks, [&](long c) {
    auto [b, e] = chunk_range(n, n_chunks, int(c));
    if (b < e) fn(int(c), b, e);
  });
}

}  // namespace specrec
