// Serial vs OpenMP timings for the hot paths: kernel matrices, their
// adjoints, and a full objective/gradient step.  Run with
// PGPR_NUM_THREADS=<k> to see the thread scaling.

#include <benchmark/benchmark.h>

#include <cmath>

#include "pgpr/grad.hpp"
#include "pgpr/kernels.hpp"
#include "pgpr/model.hpp"
#include "pgpr/objectives.hpp"
#include "pgpr/parallel.hpp"
#include "pgpr/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using pgpr::Rng;
using pgpr::par::Exec;

namespace {

constexpr int kDim = 4;
constexpr int kInducing = 64;

Exec exec_arg(const benchmark::State& state) {
  return state.range(1) ? Exec::Parallel : Exec::Serial;
}

MatrixXd random_matrix(long rows, long cols, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m(i) = rng.uniform(-2.0, 2.0);
  return m;
}

pgpr::kernels::KernelParams bench_kernel() {
  return pgpr::kernels::KernelParams::defaults(
      pgpr::kernels::KernelFamily::Matern52, kDim);
}

void BM_kernel_matrix(benchmark::State& state) {
  const long n = state.range(0);
  const auto p = bench_kernel();
  const MatrixXd x = random_matrix(n, kDim, 1);
  const MatrixXd z = random_matrix(kInducing, kDim, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pgpr::kernels::kernel_matrix(p, x, z,
                                                          exec_arg(state)));
  }
  state.SetItemsProcessed(state.iterations() * n * kInducing);
}

void BM_kernel_matrix_vjp(benchmark::State& state) {
  const long n = state.range(0);
  const auto p = bench_kernel();
  const MatrixXd x = random_matrix(n, kDim, 3);
  const MatrixXd z = random_matrix(kInducing, kDim, 4);
  const MatrixXd k_bar = random_matrix(n, kInducing, 5);
  for (auto _ : state) {
    MatrixXd dz = MatrixXd::Zero(kInducing, kDim);
    auto dtheta = pgpr::kernels::KernelHyperGrad::zero(kDim);
    pgpr::kernels::kernel_matrix_vjp(p, x, z, k_bar, &dz, &dtheta,
                                     exec_arg(state));
    benchmark::DoNotOptimize(dz);
  }
  state.SetItemsProcessed(state.iterations() * n * kInducing);
}

void BM_objective(benchmark::State& state) {
  const long n = state.range(0);
  const auto s = pgpr::grad::random_state(pgpr::objectives::Method::SVGP,
                                          kInducing, kDim, 6);
  const MatrixXd x = random_matrix(n, kDim, 7);
  VectorXd y(n);
  for (long i = 0; i < n; ++i) y[i] = std::sin(2.0 * x(i, 0));
  const pgpr::objectives::ObjectiveSpec spec{pgpr::objectives::Method::SVGP,
                                             1.0};
  // The serial/parallel switch for the per-point loop is exposed on the
  // gradient entry point, so time a full value-plus-gradient pass.
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        pgpr::grad::objective_and_gradient(s, x, y, spec, exec_arg(state))
            .value.total);
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_predictive_moments(benchmark::State& state) {
  const long n = state.range(0);
  const auto s = pgpr::grad::random_state(pgpr::objectives::Method::SVGP,
                                          kInducing, kDim, 8);
  const MatrixXd x = random_matrix(n, kDim, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pgpr::model::predictive_moments(
        s, x, pgpr::linalg::kDefaultJitter, exec_arg(state)));
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_kernel_matrix)
    ->ArgNames({"n", "par"})
    ->Args({1024, 0})
    ->Args({1024, 1})
    ->Args({16384, 0})
    ->Args({16384, 1});

BENCHMARK(BM_kernel_matrix_vjp)
    ->ArgNames({"n", "par"})
    ->Args({1024, 0})
    ->Args({1024, 1})
    ->Args({16384, 0})
    ->Args({16384, 1});

BENCHMARK(BM_objective)
    ->ArgNames({"n", "par"})
    ->Args({256, 0})
    ->Args({256, 1})
    ->Args({4096, 0})
    ->Args({4096, 1});

BENCHMARK(BM_predictive_moments)
    ->ArgNames({"n", "par"})
    ->Args({4096, 0})
    ->Args({4096, 1});

BENCHMARK_MAIN();
