#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace shared_transfer {

// 0 means auto. Resolution order: explicit request, SHARED_TRANSFER_THREADS,
// hardware concurrency.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SHARED_TRANSFER_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs fn(i) for i in [0, count). Work is handed out item-by-item; items are
// independent, so output placement is the caller's job and the schedule does
// not affect results.
inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& fn) {
  int nthreads = resolve_threads(threads);
  if (nthreads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<std::size_t>(nthreads, count);
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

// Splits [0, count) into fixed-size chunks, maps each chunk to a value in
// parallel, and returns the per-chunk values in chunk order. Chunk geometry
// depends only on (count, chunk_size), so any reduction the caller performs
// over the ordered results is identical for every thread count.
template <class T, class F>
std::vector<T> map_chunks(std::size_t count, std::size_t chunk_size,
                          int threads, F&& fn) {
  std::size_t nchunks = count == 0 ? 0 : (count + chunk_size - 1) / chunk_size;
  std::vector<T> results(nchunks);
  parallel_for(nchunks, threads, [&](std::size_t c) {
    std::size_t begin = c * chunk_size;
    std::size_t end = std::min(count, begin + chunk_size);
    results[c] = fn(begin, end);
  });
  return results;
}

}  // namespace shared_transfer
