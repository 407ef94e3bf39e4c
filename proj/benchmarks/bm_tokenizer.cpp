// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "petsynth/rng.hpp"
#include "petsynth/tokenizer.hpp"

namespace {

using namespace petsynth;

Volume make_mri(int side, std::uint64_t seed) {
  Rng rng(seed, Stream::Test);
  std::vector<float> buf(static_cast<std::size_t>(side) * side * side);
  for (auto& v : buf) v = static_cast<float>(rng.normal(0.0, 2.0));
  return Volume::from_buffer(Modality::MRI, 3, {1, side, side, side}, buf);
}

void Summarize64(benchmark::State& state) {
  const Volume vol = make_mri(64, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(summarize(vol));
  }
  state.SetItemsProcessed(static_cast<long>(state.iterations()) *
                          static_cast<long>(vol.voxel_count()));
}
BENCHMARK(Summarize64)->Unit(benchmark::kMillisecond);

void QuantizeSequence(benchmark::State& state) {
  SummarySequence seq;
  Rng rng(2, Stream::Test);
  for (auto& v : seq.values) v = rng.uniform(-200.0, 2000.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(quantize(seq));
  }
  state.SetItemsProcessed(static_cast<long>(state.iterations()) * kSummaryLength);
}
BENCHMARK(QuantizeSequence);

void PlanMask(benchmark::State& state) {
  std::array<int, kSummaryLength> ids;
  ids.fill(321);
  const TokenSequence seq = assemble(ids, ids);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan_mask(seq, seed++));
  }
}
BENCHMARK(PlanMask);

}  // namespace
