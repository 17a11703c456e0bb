// Serial reference kernels against their OpenMP versions.
//   build/bench/kp_bench --benchmark_filter=spmv
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "kp/harness.hpp"
#include "kp/kernels.hpp"

namespace {

namespace k = kp::kernels;

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& e : v) e = u(rng);
  return v;
}

k::CsrView view(const kp::CsrMatrix& a) { return {a.row_ptr, a.col_idx, a.values}; }

template <bool Parallel>
void bm_spmv(benchmark::State& st) {
  const auto a = kp::poisson2d(static_cast<int>(st.range(0)));
  const auto x = filled(a.n, 1);
  std::vector<double> y(a.n);
  for (auto _ : st) {
    if constexpr (Parallel) k::spmv(view(a), x, y);
    else k::serial::spmv(view(a), x, y);
    benchmark::DoNotOptimize(y.data());
  }
  // Values, column indices and x gathers per nonzero.
  st.SetBytesProcessed(st.iterations() * a.nnz() * static_cast<std::int64_t>(2 * sizeof(double) + sizeof(int)));
  st.counters["n"] = a.n;
}

template <bool Parallel>
void bm_dot(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto a = filled(n, 1), b = filled(n, 2);
  for (auto _ : st) {
    double d = Parallel ? k::dot(a, b) : k::serial::dot(a, b);
    benchmark::DoNotOptimize(d);
  }
  st.SetBytesProcessed(st.iterations() * static_cast<std::int64_t>(2 * n * sizeof(double)));
}

template <bool Parallel>
void bm_axpy(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto x = filled(n, 1);
  auto y = filled(n, 2);
  for (auto _ : st) {
    if constexpr (Parallel) k::axpy(1e-9, x, y);
    else k::serial::axpy(1e-9, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetBytesProcessed(st.iterations() * static_cast<std::int64_t>(3 * n * sizeof(double)));
}

template <bool Parallel>
void bm_three_term(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto x = filled(n, 1), v = filled(n, 2);
  auto y = filled(n, 3);
  // zeta + theta = 1 keeps y bounded across repetitions.
  for (auto _ : st) {
    if constexpr (Parallel) k::three_term(0.5, 1e-3, 0.5, x, v, y);
    else k::serial::three_term(0.5, 1e-3, 0.5, x, v, y);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetBytesProcessed(st.iterations() * static_cast<std::int64_t>(4 * n * sizeof(double)));
}

}  // namespace

BENCHMARK(bm_spmv<false>)->Name("spmv/serial")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_spmv<true>)->Name("spmv/omp")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_dot<false>)->Name("dot/serial")->Range(1 << 12, 1 << 22);
BENCHMARK(bm_dot<true>)->Name("dot/omp")->Range(1 << 12, 1 << 22);
BENCHMARK(bm_axpy<false>)->Name("axpy/serial")->Range(1 << 12, 1 << 22);
BENCHMARK(bm_axpy<true>)->Name("axpy/omp")->Range(1 << 12, 1 << 22);
BENCHMARK(bm_three_term<false>)->Name("three_term/serial")->Range(1 << 12, 1 << 22);
BENCHMARK(bm_three_term<true>)->Name("three_term/omp")->Range(1 << 12, 1 << 22);

BENCHMARK_MAIN();
