// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "selafd/eval.hpp"
#include "selafd/model.hpp"
#include "selafd/radar/dataset.hpp"
#include "selafd/train.hpp"

namespace {

using namespace selafd;

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({17, n}, rng), b = random_tensor({n, 4 * n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_plain(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(17 * n * 4 * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(768);

SelafdModel tiny_model(FineTuneMode mode) {
  const VitConfig c = VitConfig::tiny();
  Rng rng(2);
  return SelafdModel(c, init_vit(c, rng), PeftConfig{}, mode, 3);
}

void BM_TinyForward(benchmark::State& state) {
  const SelafdModel m = tiny_model(FineTuneMode::kSelafd);
  Rng rng(4);
  const Tensor image = random_tensor({3, 32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict_logits(image));
}
BENCHMARK(BM_TinyForward);

void BM_TinyForwardBackward(benchmark::State& state) {
  const auto mode = static_cast<FineTuneMode>(state.range(0));
  SelafdModel m = tiny_model(mode);
  Rng rng(5);
  const Tensor image = random_tensor({3, 32, 32}, rng);
  const std::vector<int> label{2};
  for (auto _ : state) {
    Graph g;
    const Var loss = g.cross_entropy(m.logits(g, image), label);
    g.backward(loss);
    m.zero_grad();
  }
  state.SetLabel(std::string(mode_name(mode)));
}
BENCHMARK(BM_TinyForwardBackward)
    ->Arg(static_cast<int>(FineTuneMode::kSelafd))
    ->Arg(static_cast<int>(FineTuneMode::kLinear))
    ->Arg(static_cast<int>(FineTuneMode::kFull));

void BM_Stft(benchmark::State& state) {
  const radar::SynthOptions o;
  const radar::CwRecording rec = radar::synth_activity(radar::Activity::kFalling, o, 6);
  const radar::StftParams p = radar::StftParams::defaults_for(o.sample_rate);
  for (auto _ : state) benchmark::DoNotOptimize(radar::stft(rec, p));
}
BENCHMARK(BM_Stft);

void BM_Rasterize(benchmark::State& state) {
  const radar::SynthOptions o;
  const radar::SpectrogramSample s = radar::stft(radar::synth_activity(radar::Activity::kWalking, o, 7),
                                                 radar::StftParams::defaults_for(o.sample_rate));
  radar::RasterOptions r;
  r.out_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(radar::rasterize(s, r));
}
BENCHMARK(BM_Rasterize)->Arg(32)->Arg(224);

void BM_SynthActivity(benchmark::State& state) {
  const radar::SynthOptions o;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(radar::synth_activity(radar::Activity::kPickingUp, o, ++seed));
}
BENCHMARK(BM_SynthActivity);

void BM_AdamStep(benchmark::State& state) {
  SelafdModel m = tiny_model(FineTuneMode::kFull);
  auto params = m.trainable_params();
  for (Tensor* p : params) p->accumulate_grad(std::vector<double>(p->size(), 1e-3));
  OptimizerState s = OptimizerState::for_params(params);
  for (auto _ : state) adam_step(params, s, 1e-4);
}
BENCHMARK(BM_AdamStep);

void BM_AttentionExport(benchmark::State& state) {
  const SelafdModel m = tiny_model(FineTuneMode::kSelafd);
  Rng rng(8);
  const Tensor image = random_tensor({3, 32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(extract_attention(m, image).default_view());
}
BENCHMARK(BM_AttentionExport);

}  // namespace

BENCHMARK_MAIN();
