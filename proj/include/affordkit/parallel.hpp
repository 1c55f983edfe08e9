#pragma once

#include <cstddef>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace affordkit {

/// Parallel loop over [0, n). Iterations must be independent; the body writes
/// only to its own output slot.
template <typename Func>
inline void parallel_for(std::ptrdiff_t n, Func&& f) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
#else
  for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
#endif
}

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace affordkit
