#include <benchmark/benchmark.h>

#include "mcrfm/kernels.hpp"
#include "mcrfm/rng.hpp"

namespace {

mcrfm::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t key) {
  mcrfm::CounterRng rng(key);
  mcrfm::Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

template <void (*Gemm)(const mcrfm::Matrix&, const mcrfm::Matrix&, mcrfm::Matrix&)>
void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const mcrfm::Matrix a = random_matrix(n, 256, 1);
  const mcrfm::Matrix b = random_matrix(256, 256, 2);
  mcrfm::Matrix c(n, 256);
  for (auto _ : state) {
    Gemm(a, b, c);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n) * 256 * 256);
}

BENCHMARK_TEMPLATE(BM_GemmNT, mcrfm::kernels::serial::gemm_nt)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK_TEMPLATE(BM_GemmNT, mcrfm::kernels::parallel::gemm_nt)->Arg(64)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
