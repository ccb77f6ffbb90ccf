#include <benchmark/benchmark.h>

#include <cmath>

#include "opdyn/spectroscopy.hpp"

using namespace opdyn;

static void BM_FftSpectrum(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  std::vector<double> t(m);
  ComplexSeries c(m);
  for (std::size_t j = 0; j < m; ++j) {
    t[j] = 0.1 * static_cast<double>(j);
    c[j] = std::exp(std::complex<double>(0, -2.3 * t[j])) + 0.5 * std::exp(std::complex<double>(0, -4.0 * t[j]));
  }
  for (auto _ : state) {
    auto s = fft_spectrum(t, c, Window::kHann);
    auto p = find_peaks(s);
    benchmark::DoNotOptimize(p.peaks.data());
  }
}
BENCHMARK(BM_FftSpectrum)->Arg(2001)->Arg(1 << 14);
