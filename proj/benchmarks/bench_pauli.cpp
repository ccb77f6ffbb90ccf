#include <benchmark/benchmark.h>

#include <random>

#include "opdyn/exact_sim.hpp"
#include "opdyn/pauli.hpp"

using namespace opdyn;

static void BM_PauliProduct(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const std::uint64_t mask = n == 64 ? ~0ULL : (1ULL << n) - 1;
  std::vector<PauliString> s;
  for (int i = 0; i < 256; ++i) s.emplace_back(n, rng() & mask, rng() & mask);
  std::size_t k = 0;
  for (auto _ : state) {
    auto p = pauli_product(s[k & 255], s[(k + 1) & 255]);
    benchmark::DoNotOptimize(p);
    ++k;
  }
}
BENCHMARK(BM_PauliProduct)->Arg(5)->Arg(64);

static void BM_FullBasisSymmetry(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto b = symmetry_filter(enumerate_full_basis(n), SymmetryOperator::bit_flip(n));
    benchmark::DoNotOptimize(b);
  }
}
BENCHMARK(BM_FullBasisSymmetry)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

static void BM_GenerateTrajectory(benchmark::State& state) {
  TfimSpec spec;
  spec.n_sites = static_cast<int>(state.range(0));
  TruncationPolicy policy;
  policy.symmetry_filter = true;
  std::vector<double> grid;
  for (int j = 0; j <= 50; ++j) grid.push_back(0.1 * j);
  const auto o = Observable::sum_x(spec.n_sites);
  for (auto _ : state) {
    auto t = generate_trajectory(spec, o, policy, grid);
    benchmark::DoNotOptimize(t.coeffs.data());
  }
}
BENCHMARK(BM_GenerateTrajectory)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);
