// Serial reference vs OpenMP kernels. Set OMP_NUM_THREADS to vary threads.

#include <benchmark/benchmark.h>

#include "fedmpa/data.hpp"
#include "fedmpa/kernels.hpp"
#include "fedmpa/models.hpp"
#include "fedmpa/rng.hpp"

using namespace fedmpa;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  DenseMatrix m(r, c);
  Rng rng(seed);
  for (double& v : m.values()) v = 2.0 * uniform01(rng) - 1.0;
  return m;
}

SparseGraph sbm_graph(std::size_t n) {
  SbmSpec s;
  s.n = n;
  s.p_in = 20.0 / static_cast<double>(n);
  s.p_out = 2.0 / static_cast<double>(n);
  s.d0 = 1;
  return normalize_sym_selfloop(generate_sbm(s).graph);
}

template <bool Ref>
void BM_Matmul(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto a = random_matrix(n, 64, 1), b = random_matrix(64, 64, 2);
  for (auto _ : st) benchmark::DoNotOptimize(Ref ? kernels::ref::matmul(a, b) : kernels::matmul(a, b));
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * 64 * 64));
}

template <bool Ref>
void BM_Spmm(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto g = sbm_graph(n);
  auto x = random_matrix(n, 16, 3);
  for (auto _ : st) benchmark::DoNotOptimize(Ref ? kernels::ref::spmm(g, x) : kernels::spmm(g, x));
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * g.n_entries() * 16));
}

void BM_Diffuse(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto g = sbm_graph(n);
  auto r0 = random_matrix(n, 7, 4);
  const DiffusionConfig d;
  for (auto _ : st) benchmark::DoNotOptimize(diffuse(g, r0, d));
}

}  // namespace

BENCHMARK(BM_Matmul<true>)->Name("matmul/ref")->Arg(1000)->Arg(5000);
BENCHMARK(BM_Matmul<false>)->Name("matmul/omp")->Arg(1000)->Arg(5000);
BENCHMARK(BM_Spmm<true>)->Name("spmm/ref")->Arg(3000)->Arg(20000);
BENCHMARK(BM_Spmm<false>)->Name("spmm/omp")->Arg(3000)->Arg(20000);
BENCHMARK(BM_Diffuse)->Name("diffuse/k10")->Arg(3000)->Arg(20000);

BENCHMARK_MAIN();
