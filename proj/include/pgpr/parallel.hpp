#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pgpr::par {

enum class Exec { Serial, Parallel };

// Thread count resolution: PGPR_NUM_THREADS if set and valid, otherwise the
// OpenMP default.  Returns the count that Exec::Parallel regions will use.
int max_threads();

// Override the thread count for subsequent parallel regions (0 = reset to
// the environment-derived default).
void set_threads(int n);

// Fixed reduction chunk.  Partial sums are formed per chunk and then folded
// in chunk order, so results are identical for any thread count and for
// serial execution.
inline constexpr long kChunk = 256;

// Sum of body(i) for i in [0, n).
template <typename Body>
double chunked_sum(long n, Body&& body, Exec exec = Exec::Parallel) {
  if (n <= 0) return 0.0;
  if (exec == Exec::Parallel) max_threads();
  const long nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<std::size_t>(nchunks), 0.0);
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (long c = 0; c < nchunks; ++c) {
      const long lo = c * kChunk;
      const long hi = lo + kChunk < n ? lo + kChunk : n;
      double acc = 0.0;
      for (long i = lo; i < hi; ++i) acc += body(i);
      partial[static_cast<std::size_t>(c)] = acc;
    }
  } else {
    for (long c = 0; c < nchunks; ++c) {
      const long lo = c * kChunk;
      const long hi = lo + kChunk < n ? lo + kChunk : n;
      double acc = 0.0;
      for (long i = lo; i < hi; ++i) acc += body(i);
      partial[static_cast<std::size_t>(c)] = acc;
    }
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// Width-sized accumulator variant: body(i, acc) adds point i's contribution
// into acc (length width).  Folding is again in chunk order.
template <typename Body>
void chunked_sum_vec(long n, int width, double* out, Body&& body,
                     Exec exec = Exec::Parallel) {
  for (int k = 0; k < width; ++k) out[k] = 0.0;
  if (n <= 0) return;
  if (exec == Exec::Parallel) max_threads();
  const long nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<std::size_t>(nchunks * width), 0.0);
  auto run_chunk = [&](long c) {
    const long lo = c * kChunk;
    const long hi = lo + kChunk < n ? lo + kChunk : n;
    double* acc = partial.data() + c * width;
    for (long i = lo; i < hi; ++i) body(i, acc);
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (long c = 0; c < nchunks; ++c) run_chunk(c);
  } else {
    for (long c = 0; c < nchunks; ++c) run_chunk(c);
  }
  for (long c = 0; c < nchunks; ++c) {
    const double* acc = partial.data() + c * width;
    for (int k = 0; k < width; ++k) out[k] += acc[k];
  }
}

// Independent iterations, no reduction.
template <typename Body>
void parallel_for(long n, Body&& body, Exec exec = Exec::Parallel) {
  if (n <= 0) return;
  if (exec == Exec::Parallel) max_threads();
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) body(i);
  } else {
    for (long i = 0; i < n; ++i) body(i);
  }
}

}  // namespace pgpr::par
