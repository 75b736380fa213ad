#include "multilat/denoise.hpp"
#include "multilat/estimators.hpp"
#include "multilat/geometry.hpp"
#include "multilat/simulate.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace multilat;

namespace {

// Lab source position 2 with Gaussian RD noise, optionally restricted to the
// first `mic_count` microphones.
RdMatrix noisy_lab_rd(std::size_t mic_count, std::vector<Point3>& mics) {
  const Scene full = lab_scene(2);
  mics.assign(full.mics.begin(), full.mics.begin() + static_cast<std::ptrdiff_t>(mic_count));
  RdNoiseModel noise;
  noise.sigma = 0.05;
  noise.seed = 7;
  return perturb_rd(true_rd_full(Scene{mics, full.source}), noise);
}

void BM_Localize(benchmark::State& state, Method method) {
  std::vector<Point3> mics;
  const RdMatrix rd = noisy_lab_rd(static_cast<std::size_t>(state.range(0)), mics);
  for (auto _ : state) {
    auto result = localize(method, rd, mics, 0);
    benchmark::DoNotOptimize(result);
  }
}

BENCHMARK_CAPTURE(BM_Localize, usrd_ls, Method::usrd_ls)->DenseRange(5, 8);
BENCHMARK_CAPTURE(BM_Localize, srd_ls, Method::srd_ls)->DenseRange(5, 8);
BENCHMARK_CAPTURE(BM_Localize, conic, Method::conic)->DenseRange(5, 8);
BENCHMARK_CAPTURE(BM_Localize, conic_norm, Method::conic_norm)->DenseRange(5, 8);
BENCHMARK_CAPTURE(BM_Localize, hyperbolic, Method::hyperbolic)->DenseRange(5, 8);

void BM_TdoaAverage(benchmark::State& state) {
  std::vector<Point3> mics;
  const RdMatrix rd = noisy_lab_rd(8, mics);
  for (auto _ : state) {
    auto avg = tdoa_average(rd);
    benchmark::DoNotOptimize(avg);
  }
}
BENCHMARK(BM_TdoaAverage);

}  // namespace
