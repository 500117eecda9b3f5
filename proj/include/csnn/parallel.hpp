#pragma once

#include <cstddef>
#include <functional>

namespace csnn {

// Worker cap: min(CSNN_THREADS, hardware_concurrency), at least 1.
// Read once; tests may override via set_thread_cap.
std::size_t thread_cap();
void set_thread_cap(std::size_t n);

// Runs fn(begin, end, chunk_index) over [0,n) split into fixed-size chunks
// of `grain` indices. The chunk partition depends only on (n, grain), never
// on the worker count, so any cross-chunk merge done in chunk-index order
// is bit-identical for every CSNN_THREADS value.
void parallel_chunks(std::size_t n, std::size_t grain,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn);

inline std::size_t chunk_count(std::size_t n, std::size_t grain) {
  return grain == 0 ? 0 : (n + grain - 1) / grain;
}

}  // namespace csnn
