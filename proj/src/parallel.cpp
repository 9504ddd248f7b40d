#include "pgpr/parallel.hpp"

#include <cstdlib>
#include <string>

namespace pgpr::par {
namespace {

int resolve_env_threads() {
  const char* v = std::getenv("PGPR_NUM_THREADS");
  if (v != nullptr) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && n > 0) return static_cast<int>(n);
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int& thread_override() {
  static int value = 0;
  return value;
}

}  // namespace

int max_threads() {
  if (thread_override() > 0) return thread_override();
  static const int env_threads = resolve_env_threads();
#ifdef _OPENMP
  // Keep OpenMP's notion in sync so the pragmas actually honor the setting.
  static const bool applied = [] {
    omp_set_num_threads(env_threads);
    return true;
  }();
  (void)applied;
#endif
  return env_threads;
}

void set_threads(int n) {
  thread_override() = n;
#ifdef _OPENMP
  if (n > 0) {
    omp_set_num_threads(n);
  } else {
    omp_set_num_threads(max_threads());
  }
#endif
}

}  // namespace pgpr::par
