#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bcbf {

// Execution mode for data-parallel kernels. Both modes write results into
// preallocated slots, so outputs are bit-identical; `serial` is the
// reference implementation kept for testing and benchmarking.
enum class Exec { serial, openmp };

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// Runs body(i) for i in [0, n). Bodies must only write to slots owned by
// their index.
template <class F>
void for_each_index(std::ptrdiff_t n, Exec mode, F&& body) {
  if (mode == Exec::openmp) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  }
}

}  // namespace bcbf
