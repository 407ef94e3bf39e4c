// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "petsynth/bert.hpp"
#include "petsynth/generator.hpp"
#include "petsynth/metrics.hpp"
#include "petsynth/rng.hpp"

namespace {

using namespace petsynth;

void GeneratorForwardDesk(benchmark::State& state) {
  GeneratorConfig cfg;  // 64^3 -> 2x24x19x19
  Generator gen(cfg, 1);
  Rng rng(2, Stream::Test);
  std::vector<double> in(64 * 64 * 64);
  for (auto& v : in) v = rng.normal(0.0, 1.0);
  Generator::Workspace ws;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen.forward(in, ws));
  }
}
BENCHMARK(GeneratorForwardDesk)->Unit(benchmark::kMillisecond);

void BertEncode(benchmark::State& state) {
  BertConfig cfg;
  cfg.layers = static_cast<int>(state.range(0));
  cfg.hidden = static_cast<int>(state.range(1));
  cfg.heads = 4;
  cfg.ffn = cfg.hidden * 4;
  Bert bert(cfg, 3);
  Rng rng(4, Stream::Test);
  std::array<int, kSummaryLength> ids;
  for (auto& id : ids) id = 1 + static_cast<int>(rng.below(10000));
  const TokenSequence seq = assemble(ids, ids);
  Bert::Workspace ws;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bert.encode(seq, ws));
  }
}
BENCHMARK(BertEncode)->Args({2, 64})->Args({2, 128})->Args({4, 256})
    ->Unit(benchmark::kMillisecond);

void SsimDeskPet(benchmark::State& state) {
  Rng rng(5, Stream::Test);
  std::vector<float> a(2 * 24 * 19 * 19), b(a.size());
  for (auto& v : a) v = static_cast<float>(rng.uniform(-10.0, 1000.0));
  for (auto& v : b) v = static_cast<float>(rng.uniform(-10.0, 1000.0));
  const Volume real = Volume::from_buffer(Modality::PET, 4, {2, 24, 19, 19}, a);
  const Volume gen = Volume::from_buffer(Modality::PET, 4, {2, 24, 19, 19}, b);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssim(real, gen));
  }
}
BENCHMARK(SsimDeskPet)->Unit(benchmark::kMillisecond);

}  // namespace
