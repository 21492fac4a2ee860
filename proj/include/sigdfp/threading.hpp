#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sigdfp {

// Work is always split into fixed-size chunks and partial results are
// combined in chunk order, so results do not depend on the thread count.
inline constexpr std::size_t kChunkPaths = 64;

struct ChunkRange {
  std::size_t begin;
  std::size_t end;  // exclusive
};

inline std::size_t num_chunks(std::size_t n, std::size_t chunk = kChunkPaths) {
  return (n + chunk - 1) / chunk;
}

inline ChunkRange chunk_range(std::size_t n, std::size_t c,
                              std::size_t chunk = kChunkPaths) {
  const std::size_t b = c * chunk;
  const std::size_t e = b + chunk < n ? b + chunk : n;
  return {b, e};
}

// Runs fn(chunk_index) for every chunk of [0, n). The chunk decomposition is
// independent of the number of threads. Exceptions cannot cross an OpenMP
// region, so the first one is captured and rethrown after the join.
template <class Fn>
void parallel_chunks(std::size_t n, Fn&& fn, std::size_t chunk = kChunkPaths) {
  const long nc = static_cast<long>(num_chunks(n, chunk));
  std::exception_ptr err = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) shared(err)
#endif
  for (long c = 0; c < nc; ++c) {
    try {
      fn(static_cast<std::size_t>(c));
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical(sigdfp_parallel_chunks_err)
#endif
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace sigdfp
