#include "multilat/geometry.hpp"
#include "multilat/simulate.hpp"
#include "multilat/tdoa.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

using namespace multilat;

namespace {

void BM_GccPhatPair(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> white;
  std::vector<double> a(n + 40), b(n);
  for (auto& x : a) x = white(rng);
  std::copy(a.begin() + 17, a.begin() + 17 + static_cast<std::ptrdiff_t>(n), b.begin());
  a.resize(n);
  for (auto _ : state) {
    auto lag = gcc_phat_pair(a, b, 128, true);
    benchmark::DoNotOptimize(lag);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_GccPhatPair)->RangeMultiplier(2)->Range(256, 4096);

void BM_EstimateTdoaMatrix(benchmark::State& state) {
  SignalModel model;
  model.snr_db = 30.0;
  model.seed = 11;
  const MicSignals sig = synth_signals(lab_scene(2), model, 1.0, 16000.0);
  TdoaOptions opts;
  opts.vad = state.range(0) != 0;
  for (auto _ : state) {
    auto t = estimate_tdoa_matrix(sig, FrameConfig{}, opts);
    benchmark::DoNotOptimize(t);
  }
}
BENCHMARK(BM_EstimateTdoaMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SynthSignals(benchmark::State& state) {
  SignalModel model;
  model.snr_db = 30.0;
  model.seed = 12;
  const Scene scene = lab_scene(2);
  for (auto _ : state) {
    auto sig = synth_signals(scene, model, 1.0, 16000.0);
    benchmark::DoNotOptimize(sig);
  }
}
BENCHMARK(BM_SynthSignals)->Unit(benchmark::kMillisecond);

}  // namespace
