#include "openrdm/kernels.hpp"
#include "openrdm/model.hpp"

#include <benchmark/benchmark.h>

using namespace openrdm;

namespace {

struct Setup {
  Mat h, sigma;
  kernels::SparseHermitian sparse;
  RVec shift;
  explicit Setup(Index n) {
    const Index nD = 4, nL = (n - nD) / 2;
    const auto sys = build_chain_system(nL, nD, n - nD - nL, -1.0, 0.0);
    h = sys.h0();
    sigma = ground_state_density_matrix(sys, n / 2);
    sparse = kernels::SparseHermitian(h);
    shift = RVec::LinSpaced(n, 0.25, -0.25);
  }
};

void BM_commutator_serial_dense(benchmark::State &st) {
  Setup s(st.range(0));
  Mat out;
  for (auto _ : st) {
    kernels::commutator_serial(s.h, s.sigma, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_commutator_parallel_sparse(benchmark::State &st) {
  Setup s(st.range(0));
  Mat out;
  for (auto _ : st) {
    kernels::commutator_parallel(s.sparse, s.shift, s.sigma, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_commutator_eigen_dense(benchmark::State &st) {
  Setup s(st.range(0));
  Mat out;
  for (auto _ : st) {
    out.noalias() = s.h * s.sigma;
    out.noalias() -= s.sigma * s.h;
    benchmark::DoNotOptimize(out.data());
  }
}

} // namespace

BENCHMARK(BM_commutator_serial_dense)->Arg(44)->Arg(200)->Arg(800)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_commutator_parallel_sparse)->Arg(44)->Arg(200)->Arg(800)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_commutator_eigen_dense)->Arg(44)->Arg(200)->Arg(800)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
