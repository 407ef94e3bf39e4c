// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one self-contained check per release criterion, each
// printing a single PASS/FAIL line. Run `acceptance all` or a list of
// criterion numbers. Exit code is the number of failures.
//
// The heavier training criteria (7, 8) use deliberately small desk-scale
// model configs so the whole suite stays CPU-friendly; every tolerance and
// threshold is pinned in code here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "metric_reference.hpp"
#include "petsynth/bert.hpp"
#include "petsynth/generator.hpp"
#include "petsynth/metrics.hpp"
#include "petsynth/rng.hpp"
#include "petsynth/tokenizer.hpp"
#include "petsynth/training.hpp"
#include "petsynth/volume.hpp"

namespace fs = std::filesystem;
using namespace petsynth;

namespace {

struct Result {
  bool pass = false;
  std::string details;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

// Desk-scale data profile shared by the training criteria.
DataConfig desk_data_config() {
  DataConfig cfg;
  cfg.mri_dims = {64, 64, 64};
  cfg.pet_dims = {2, 24, 19, 19};
  return cfg;
}

GeneratorConfig desk_generator_config() {
  GeneratorConfig g;
  g.input_dims = {64, 64, 64};
  g.output_dims = {2, 24, 19, 19};
  g.depth = 3;
  g.base_channels = 8;
  g.max_channels = 64;
  return g;
}

BertConfig small_bert_config() {
  BertConfig b;
  b.layers = 2;
  b.hidden = 64;
  b.heads = 4;
  b.ffn = 256;
  return b;
}

// ---------------------------------------------------------------------------
// 1. Tokenizer range safety: 1e6 uniform floats in [-200, 2000], every id in
//    [1, 1e4]; negative folds in [1,500), overflow folds in [500,1000];
//    under 10 seconds.
Result criterion_tokenizer_range() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024, Stream::Test);
  long in_band = 0, neg_folds = 0, over_folds = 0;
  for (long i = 0; i < 1000000; ++i) {
    const float v = static_cast<float>(rng.uniform(-200.0, 2000.0));
    const int id = quantize_value(v);
    if (id < 1 || id > 10000) {
      return {false, fmt("id %d out of band for value %g", id, v)};
    }
    const double q = std::round(static_cast<double>(v) * 1000.0);
    if (q <= 0.0) {
      if (id < 1 || id >= 500) {
        return {false, fmt("negative fold %g -> %d outside [1,500)", v, id)};
      }
      ++neg_folds;
    } else if (q > 10000.0) {
      if (id < 500 || id > 1000) {
        return {false, fmt("overflow fold %g -> %d outside [500,1000]", v, id)};
      }
      ++over_folds;
    } else {
      ++in_band;
    }
  }
  const double dt = seconds_since(t0);
  if (dt >= 10.0) return {false, fmt("took %.2f s (limit 10 s)", dt)};
  return {true, fmt("1e6 values: %ld in band, %ld negative folds, %ld overflow "
                    "folds, %.2f s",
                    in_band, neg_folds, over_folds, dt)};
}

// 2. Quantization round trip: 1e4 values in [0.001, 10], error <= 5e-4.
Result criterion_quantize_roundtrip() {
  Rng rng(7, Stream::Test);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(0.001, 10.0);
    const double back = dequantize_value(quantize_value(v));
    worst = std::max(worst, std::fabs(back - v));
  }
  if (worst > 5e-4) return {false, fmt("worst error %.3g > 5e-4", worst)};
  return {true, fmt("worst round-trip error %.3g <= 5e-4", worst)};
}

// 3. Normalization round trip within 1e-4 relative on [-100, 1000].
Result criterion_normalize_roundtrip() {
  Rng rng(8, Stream::Test);
  double worst = 0.0;
  for (int rep = 0; rep < 4; ++rep) {
    NormalizationStats stats;
    stats.mean = rng.uniform(5.0, 200.0);
    stats.std = rng.uniform(1.0, 100.0);
    std::vector<float> buf(2500);
    for (auto& x : buf) x = static_cast<float>(rng.uniform(-100.0, 1000.0));
    Volume pet = Volume::from_buffer(Modality::PET, 4, {1, 5, 20, 25}, buf);
    const Volume back = restore_pet(normalize_pet(pet, stats), stats);
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double rel = std::fabs(back.values()[i] - buf[i]) /
                         std::max(1.0, std::fabs(static_cast<double>(buf[i])));
      worst = std::max(worst, rel);
    }
  }
  if (worst > 1e-4) return {false, fmt("worst relative error %.3g > 1e-4", worst)};
  return {true, fmt("1e4 values, worst relative error %.3g <= 1e-4", worst)};
}

// 4. Mask-plan exactness over 1e3 seeded plans.
Result criterion_mask_plans() {
  std::array<int, kSummaryLength> mri, pet;
  mri.fill(123);
  pet.fill(456);
  const TokenSequence seq = assemble(mri, pet);
  for (int seed = 0; seed < 1000; ++seed) {
    auto [masked, plan] = plan_mask(seq, static_cast<std::uint64_t>(seed));
    int mri_n = 0, pet_n = 0;
    int prev = -1;
    for (int pos : plan.masked_positions) {
      if (pos == 0 || pos == 513 || pos == 1026) {
        return {false, fmt("seed %d masked special position %d", seed, pos)};
      }
      if (pos <= prev) return {false, fmt("seed %d not sorted/unique", seed)};
      prev = pos;
      if (pos >= 1 && pos <= 512) ++mri_n;
      if (pos >= 514 && pos <= 1025) ++pet_n;
    }
    if (mri_n != 26 || pet_n != 128) {
      return {false, fmt("seed %d counts %d/%d != 26/128", seed, mri_n, pet_n)};
    }
    if (masked.ids[0] != kBeginId || masked.ids[513] != kSepId ||
        masked.ids[1026] != kEndId) {
      return {false, fmt("seed %d corrupted specials", seed)};
    }
  }
  return {true, "1000 plans: exactly 26 MRI + 128 PET slots, specials untouched"};
}

// 5. Shape contract: desk 64^3 -> 2x24x19x19 and full 256^3 -> 2x93x76x76.
Result criterion_shapes() {
  {
    Generator gen(desk_generator_config(), 41);
    Rng rng(42, Stream::Test);
    std::vector<double> in(64 * 64 * 64);
    for (auto& v : in) v = rng.normal(0.0, 1.0);
    Generator::Workspace ws;
    const nn::Tensor4& out = gen.forward(in, ws);
    if (out.c != 2 || out.d != 24 || out.h != 19 || out.w != 19) {
      return {false, fmt("desk output (%d,%d,%d,%d) != (2,24,19,19)", out.c,
                         out.d, out.h, out.w)};
    }
  }
  {
    GeneratorConfig full;
    full.input_dims = {256, 256, 256};
    full.output_dims = {2, 93, 76, 76};
    full.depth = 5;
    full.base_channels = 8;
    full.max_channels = 64;
    Generator gen(full, 43);
    Rng rng(44, Stream::Test);
    std::vector<double> in(static_cast<std::size_t>(256) * 256 * 256);
    for (auto& v : in) v = rng.normal(0.0, 1.0);
    Generator::Workspace ws;
    const nn::Tensor4& out = gen.forward(in, ws);
    if (out.c != 2 || out.d != 93 || out.h != 76 || out.w != 76) {
      return {false, fmt("full output (%d,%d,%d,%d) != (2,93,76,76)", out.c,
                         out.d, out.h, out.w)};
    }
  }
  return {true, "desk 64^3 -> 2x24x19x19; full 256^3 -> 2x93x76x76 (forward only)"};
}

// 6. Gradient checks: tanhshrink vs central differences (1e-6), nonzero
//    per-component generator gradients, discriminator finite-difference spot
//    checks (1e-3).
Result criterion_gradients() {
  for (double x : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
    const double h = 1e-6;
    const double findiff = (nn::tanhshrink(x + h) - nn::tanhshrink(x - h)) / (2 * h);
    const double analytic = nn::tanhshrink_grad(x);
    const double rel = std::fabs(analytic - findiff) / std::max(1.0, std::fabs(analytic));
    if (rel > 1e-6) {
      return {false, fmt("tanhshrink'(%g): analytic %g vs fd %g (rel %.2g)", x,
                         analytic, findiff, rel)};
    }
  }

  // per-component generator gradient norms at random init, desk config
  const DataConfig dcfg = desk_data_config();
  TrainConfig tcfg;
  tcfg.micro_batch = 1;
  tcfg.accumulation_steps = 1;
  tcfg.total_steps = 10;
  tcfg.seed = 2025;
  tcfg.threads = 2;
  std::vector<TrainSample> data;
  data.push_back(prepare_sample(synth_pair(606, dcfg), desk_generator_config()));
  Trainer trainer(desk_generator_config(), small_bert_config(), tcfg,
                  LossWeights{}, std::move(data));
  const char* names[3] = {"nsp", "mlm", "l1"};
  const LossWeights masks[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::string norms;
  for (int k = 0; k < 3; ++k) {
    nn::GradBuffer g(trainer.generator().params());
    trainer.generator_sample_pass(trainer.dataset()[0], masks[k], 99, &g);
    const double n = std::sqrt(g.squared_norm());
    if (!(n > 0.0)) {
      return {false, fmt("generator %s-component gradient norm is zero", names[k])};
    }
    norms += fmt("%s %.3g ", names[k], n);
  }
  {
    // with the full objective, every parameter tensor must receive gradient
    nn::GradBuffer g(trainer.generator().params());
    trainer.generator_sample_pass(trainer.dataset()[0], LossWeights{}, 99, &g);
    for (std::size_t t = 0; t < trainer.generator().params().size(); ++t) {
      if (!(g.slot_squared_norm(static_cast<int>(t)) > 0.0)) {
        return {false, fmt("no gradient reaches %s at desk config",
                           trainer.generator().params()[t].name.c_str())};
      }
    }
  }

  // discriminator finite-difference spot checks on 3 random scalars
  Bert bert(small_bert_config(), 77);
  const TrainSample& s = trainer.dataset()[0];
  const TokenSequence seq = assemble(s.mri_ids, s.pet_ids);
  auto [masked, plan] = plan_mask(seq, 31415);

  auto loss_fn = [&]() {
    Bert::Workspace ws;
    const nn::MatrixXd& hidden = bert.encode(masked, ws);
    Eigen::RowVectorXd nsp = bert.nsp_logits(hidden).transpose();
    double loss = nn::softmax_cross_entropy(nsp, kNspRealClass, nullptr);
    const nn::MatrixXd mlm = bert.mlm_logits(hidden, plan);
    Eigen::RowVectorXd row;
    double ml = 0.0;
    for (long i = 0; i < mlm.rows(); ++i) {
      row = mlm.row(i);
      ml += nn::softmax_cross_entropy(row, plan.original_ids[i], nullptr);
    }
    return loss + ml / static_cast<double>(mlm.rows());
  };

  nn::GradBuffer g(bert.params());
  {
    Bert::Workspace ws;
    const nn::MatrixXd& hidden = bert.encode(masked, ws);
    Eigen::RowVectorXd nsp = bert.nsp_logits(hidden).transpose(), d_nsp;
    nn::softmax_cross_entropy(nsp, kNspRealClass, &d_nsp);
    const nn::MatrixXd mlm = bert.mlm_logits(hidden, plan);
    nn::MatrixXd d_mlm(mlm.rows(), mlm.cols());
    Eigen::RowVectorXd row, drow;
    for (long i = 0; i < mlm.rows(); ++i) {
      row = mlm.row(i);
      nn::softmax_cross_entropy(row, plan.original_ids[i], &drow);
      d_mlm.row(i) = drow / static_cast<double>(mlm.rows());
    }
    nn::MatrixXd d_hidden =
        nn::MatrixXd::Zero(kSequenceLength, bert.config().hidden);
    bert.nsp_backward(hidden, d_nsp, d_hidden, &g);
    bert.mlm_backward(hidden, plan, d_mlm, d_hidden, &g);
    bert.backward(masked, ws, d_hidden, &g);
  }

  Rng pick(271828, Stream::Test);
  const auto& refs = bert.params();
  for (int probe = 0; probe < 3; ++probe) {
    const int t = static_cast<int>(pick.below(refs.size()));
    const std::size_t i = pick.below(refs[t].size);
    double* p = refs[t].data + i;
    const double h = 1e-5 * std::max(1.0, std::fabs(*p));
    const double orig = *p;
    *p = orig + h;
    const double lp = loss_fn();
    *p = orig - h;
    const double lm = loss_fn();
    *p = orig;
    const double findiff = (lp - lm) / (2 * h);
    const double analytic = g.slot(t)[i];
    const double rel = std::fabs(analytic - findiff) /
                       std::max({1.0, std::fabs(analytic), std::fabs(findiff)});
    if (rel > 1e-3) {
      return {false, fmt("fd mismatch on %s[%zu]: %.6g vs %.6g (rel %.2g)",
                         refs[t].name.c_str(), i, analytic, findiff, rel)};
    }
  }
  return {true, "tanhshrink fd <= 1e-6; component norms " + norms +
                    "> 0; 3 discriminator fd probes <= 1e-3"};
}

// 7. Discriminator sanity: frozen random generator, NSP-only training for 200
//    steps on 32 pairs; held-out real-vs-generated accuracy >= 0.9 within the
//    CPU budget (45 min).
Result criterion_discriminator_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const DataConfig dcfg = desk_data_config();
  const GeneratorConfig gcfg = desk_generator_config();
  BertConfig bcfg;
  bcfg.layers = 2;
  bcfg.hidden = 128;
  bcfg.heads = 4;
  bcfg.ffn = 512;

  const std::uint64_t seed = 4242;
  Generator frozen_gen(gcfg, seed);           // stays at random init
  Bert bert(bcfg, seed);

  // Precompute token sequences once: the generator never moves.
  const int n_train = 32, n_held = 8;
  struct SeqPair {
    std::array<int, kSummaryLength> mri, real_pet, gen_pet;
  };
  std::vector<SeqPair> all(n_train + n_held);
  Generator::Workspace gen_ws;
  for (int i = 0; i < n_train + n_held; ++i) {
    const TrainSample s =
        prepare_sample(synth_pair(mix_seed(seed, Stream::Test, i), dcfg), gcfg);
    all[i].mri = s.mri_ids;
    all[i].real_pet = s.pet_ids;
    const nn::Tensor4& out = frozen_gen.forward(s.mri_norm, gen_ws);
    all[i].gen_pet =
        quantize(summarize_raw(out.v, gcfg.output_dims, Modality::PET).summary);
  }

  const int micro = 2, accum = 2, steps = 200;
  const double base_lr = 3e-4;
  TrainConfig lr_cfg;
  lr_cfg.base_lr = base_lr;
  lr_cfg.warmup_fraction = 0.05;
  lr_cfg.total_steps = steps;

  nn::Adam adam(bert.params());
  nn::GradBuffer total(bert.params()), micro_buf(bert.params()),
      slot_buf(bert.params());
  Bert::Workspace ws;
  for (int step = 0; step < steps; ++step) {
    total.zero();
    for (int m = 0; m < accum; ++m) {
      micro_buf.zero();
      for (int j = 0; j < micro; ++j) {
        const int slot = m * micro + j;
        const int idx = (step * micro * accum + slot) % n_train;
        Rng coin(seed, Stream::RealGenCoin, step, slot);
        const bool use_real = coin.uniform() < 0.5;
        const auto& sp = all[idx];
        const TokenSequence seq =
            assemble(sp.mri, use_real ? sp.real_pet : sp.gen_pet);
        auto [masked, plan] =
            plan_mask(seq, mix_seed(seed, Stream::MaskPlan, step, slot));
        const nn::MatrixXd& hidden = bert.encode(masked, ws);
        Eigen::RowVectorXd logits = bert.nsp_logits(hidden).transpose(), dl;
        nn::softmax_cross_entropy(
            logits, use_real ? kNspRealClass : kNspGeneratedClass, &dl);
        slot_buf.zero();
        nn::MatrixXd d_hidden = nn::MatrixXd::Zero(kSequenceLength, bcfg.hidden);
        bert.nsp_backward(hidden, dl, d_hidden, &slot_buf);
        bert.backward(masked, ws, d_hidden, &slot_buf);
        micro_buf.add_scaled(slot_buf, 1.0 / micro);
      }
      total.add_scaled(micro_buf, 1.0 / accum);
    }
    adam.step(bert.params(), total, lr_at(step, lr_cfg));
  }

  int correct = 0, evaluated = 0;
  for (int i = n_train; i < n_train + n_held; ++i) {
    for (const bool use_real : {true, false}) {
      const auto& sp = all[i];
      const TokenSequence seq =
          assemble(sp.mri, use_real ? sp.real_pet : sp.gen_pet);
      auto [masked, plan] =
          plan_mask(seq, mix_seed(seed, Stream::MaskPlan, 10000 + i, use_real));
      const nn::MatrixXd& hidden = bert.encode(masked, ws);
      const Eigen::Vector2d logits = bert.nsp_logits(hidden);
      const int pred = logits(kNspRealClass) >= logits(kNspGeneratedClass)
                           ? kNspRealClass
                           : kNspGeneratedClass;
      const int truth = use_real ? kNspRealClass : kNspGeneratedClass;
      if (pred == truth) ++correct;
      ++evaluated;
    }
  }
  const double acc = static_cast<double>(correct) / evaluated;
  const double dt = seconds_since(t0);
  if (dt >= 2700.0) return {false, fmt("took %.0f s (CPU limit 2700 s)", dt)};
  if (acc < 0.9) {
    return {false, fmt("held-out accuracy %.3f < 0.9 (%.0f s)", acc, dt)};
  }
  return {true, fmt("held-out accuracy %.3f (%d/%d) after 200 NSP-only steps, "
                    "%.0f s",
                    acc, correct, evaluated, dt)};
}

// 8. Overfit smoke: 300 full steps on 4 desk pairs, lambda = (20, 1, 20).
//    L1 drops >= 80%, PSNR gains >= 6 dB, tanhshrink output exceeds |1|;
//    the tanh ablation cannot exceed |1|.
Result criterion_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const DataConfig dcfg = desk_data_config();
  const GeneratorConfig gcfg = desk_generator_config();

  TrainConfig tcfg;
  tcfg.micro_batch = 2;
  tcfg.accumulation_steps = 2;
  tcfg.base_lr = 4e-3;
  tcfg.warmup_fraction = 0.05;
  tcfg.total_steps = 300;
  tcfg.seed = 777;
  tcfg.threads = 2;
  LossWeights weights;  // (20, 1, 20)

  std::vector<PairSample> pairs;
  std::vector<TrainSample> samples;
  for (int i = 0; i < 4; ++i) {
    pairs.push_back(synth_pair(5000 + i, dcfg));
    samples.push_back(prepare_sample(pairs.back(), gcfg));
  }

  auto train_psnr = [&](Trainer& trainer) {
    std::vector<PairMetrics> pm;
    Generator::Workspace ws;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const nn::Tensor4& gen = trainer.generator().forward(samples[i].mri_norm, ws);
      std::vector<float> f(gen.v.begin(), gen.v.end());
      Volume gen_norm =
          Volume::from_buffer(Modality::PET, 4, gcfg.output_dims, std::move(f));
      pm.push_back(
          pair_metrics(pairs[i].pet, restore_pet(gen_norm, samples[i].stats)));
    }
    return aggregate_metrics(pm).psnr;
  };
  auto max_abs_output = [&](Trainer& trainer) {
    double m = 0.0;
    Generator::Workspace ws;
    for (const auto& s : samples) {
      const nn::Tensor4& gen = trainer.generator().forward(s.mri_norm, ws);
      for (double v : gen.v) m = std::max(m, std::fabs(v));
    }
    return m;
  };

  Trainer trainer(gcfg, small_bert_config(), tcfg, weights, samples);
  const double psnr_before = train_psnr(trainer);
  trainer.run(300);
  const double l1_first = trainer.history().front().g_l1;
  const double l1_last = trainer.history().back().g_l1;
  const double psnr_after = train_psnr(trainer);
  const double peak = max_abs_output(trainer);

  GeneratorConfig ablated = gcfg;
  ablated.output_activation = OutputActivation::Tanh;
  Trainer tanh_trainer(ablated, small_bert_config(), tcfg, weights, samples);
  tanh_trainer.run(300);
  const double tanh_peak = max_abs_output(tanh_trainer);

  const double drop = 1.0 - l1_last / l1_first;
  const double gain = psnr_after - psnr_before;
  const double dt = seconds_since(t0);
  std::string details =
      fmt("L1 %.4f -> %.4f (drop %.1f%%), PSNR %.2f -> %.2f dB (+%.2f), "
          "max|out| %.2f, tanh ablation max|out| %.4f, %.0f s",
          l1_first, l1_last, 100.0 * drop, psnr_before, psnr_after, gain, peak,
          tanh_peak, dt);
  if (drop < 0.8) return {false, "L1 drop below 80%: " + details};
  if (gain < 6.0) return {false, "PSNR gain below 6 dB: " + details};
  if (!(peak > 1.0)) return {false, "tanhshrink output never left [-1,1]: " + details};
  if (!(tanh_peak < 1.0)) {
    return {false, "tanh ablation exceeded [-1,1], which is impossible: " + details};
  }
  return {true, details};
}

// 9. Metric oracles: PSNR/SSIM/RMSE on 10 random 8^3 pairs match brute-force
//    definitional implementations within 1e-6.
Result criterion_metric_oracles() {
  Rng rng(99, Stream::Test);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const int t = (i % 2) + 1;
    std::vector<float> a(static_cast<std::size_t>(t) * 8 * 8 * 8),
        b(static_cast<std::size_t>(t) * 8 * 8 * 8);
    for (auto& x : a) x = static_cast<float>(rng.uniform(-10.0, 1000.0));
    for (auto& x : b) x = static_cast<float>(rng.uniform(-10.0, 1000.0));
    const Volume real = Volume::from_buffer(Modality::PET, 4, {t, 8, 8, 8}, a);
    const Volume gen = Volume::from_buffer(Modality::PET, 4, {t, 8, 8, 8}, b);

    const double dp = std::fabs(psnr(real, gen) - testref::psnr_reference(real, gen)) /
                      std::max(1.0, std::fabs(testref::psnr_reference(real, gen)));
    const double ds = std::fabs(ssim(real, gen) - testref::ssim_reference(real, gen)) /
                      std::max(1.0, std::fabs(testref::ssim_reference(real, gen)));
    const double dr = std::fabs(rmse(real, gen) - testref::rmse_reference(real, gen)) /
                      std::max(1.0, testref::rmse_reference(real, gen));
    worst = std::max({worst, dp, ds, dr});
  }
  if (worst > 1e-6) return {false, fmt("worst oracle mismatch %.3g > 1e-6", worst)};
  return {true, fmt("10 pairs, worst relative mismatch %.3g <= 1e-6", worst)};
}

// 10. Gradient accumulation: 2x2 micro-batches equal one batch of 4 within
//     1e-5 relative, tensor by tensor.
Result criterion_accumulation() {
  DataConfig dcfg;
  dcfg.mri_dims = {32, 32, 32};
  dcfg.pet_dims = {2, 16, 16, 16};
  GeneratorConfig gcfg;
  gcfg.input_dims = {32, 32, 32};
  gcfg.output_dims = {2, 16, 16, 16};
  gcfg.depth = 2;
  gcfg.base_channels = 4;
  gcfg.max_channels = 16;
  BertConfig bcfg;
  bcfg.layers = 1;
  bcfg.hidden = 32;
  bcfg.heads = 2;
  bcfg.ffn = 64;

  std::vector<TrainSample> data;
  for (int i = 0; i < 4; ++i) {
    data.push_back(prepare_sample(synth_pair(800 + i, dcfg), gcfg));
  }

  TrainConfig split;
  split.micro_batch = 2;
  split.accumulation_steps = 2;
  split.seed = 55;
  split.total_steps = 10;
  split.threads = 2;
  TrainConfig fused = split;
  fused.micro_batch = 4;
  fused.accumulation_steps = 1;

  Trainer a(gcfg, bcfg, split, LossWeights{}, data);
  Trainer b(gcfg, bcfg, fused, LossWeights{}, data);
  const nn::GradBuffer ga = a.accumulate_generator_gradients(0);
  const nn::GradBuffer gb = b.accumulate_generator_gradients(0);

  double worst = 0.0;
  for (std::size_t t = 0; t < ga.count(); ++t) {
    double num = 0.0, den = 0.0;
    const auto& sa = ga.slot(static_cast<int>(t));
    const auto& sb = gb.slot(static_cast<int>(t));
    for (std::size_t i = 0; i < sa.size(); ++i) {
      num += (sa[i] - sb[i]) * (sa[i] - sb[i]);
      den += sb[i] * sb[i];
    }
    if (den > 0.0) worst = std::max(worst, std::sqrt(num) / std::sqrt(den));
  }
  if (worst > 1e-5) return {false, fmt("worst tensor mismatch %.3g > 1e-5", worst)};
  return {true, fmt("per-tensor relative mismatch <= %.3g (limit 1e-5)", worst)};
}

// 11. Determinism: two seeded synth-data + train --steps 50 CLI runs produce
//     byte-identical loss CSVs.
Result criterion_determinism() {
  const char* cli = std::getenv("PETSYNTH_CLI");
  if (cli == nullptr) return {false, "PETSYNTH_CLI is not set"};

  const fs::path dir = fs::temp_directory_path() / "petsynth_acceptance_c11";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "cfg.json";
  {
    std::ofstream out(cfg);
    out << R"({
      "data": { "mri_dims": [16,16,16], "pet_dims": [2,8,8,8], "seed": 21 },
      "generator": { "base_channels": 4, "max_channels": 8 },
      "bert": { "layers": 1, "hidden": 32, "heads": 2, "ffn": 64 },
      "train": { "total_steps": 50, "seed": 13, "base_lr": 1e-3, "threads": 2 }
    })";
  }
  auto run = [&](const std::string& tag) -> int {
    const std::string data_dir = (dir / ("data_" + tag)).string();
    const std::string run_dir = (dir / ("run_" + tag)).string();
    std::string cmd = std::string(cli) + " synth-data --config " + cfg.string() +
                      " --out " + data_dir + " -n 4 >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return -1;
    cmd = std::string(cli) + " train --config " + cfg.string() + " --data " +
          data_dir + " --out " + run_dir + " --steps 50 >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return -2;
    return 0;
  };
  if (run("a") != 0) return {false, "first CLI run failed"};
  if (run("b") != 0) return {false, "second CLI run failed"};

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string csv_a = slurp(dir / "run_a" / "loss.csv");
  const std::string csv_b = slurp(dir / "run_b" / "loss.csv");
  if (csv_a.empty()) return {false, "first run produced an empty loss.csv"};
  if (csv_a != csv_b) return {false, "loss CSVs differ between identical runs"};
  const long rows = std::count(csv_a.begin(), csv_a.end(), '\n') - 1;
  return {true, fmt("two runs, byte-identical loss CSVs (%ld rows)", rows)};
}

struct Criterion {
  int number;
  const char* slug;
  Result (*fn)();
};

const Criterion kCriteria[] = {
    {1, "tokenizer-range-safety", criterion_tokenizer_range},
    {2, "quantization-round-trip", criterion_quantize_roundtrip},
    {3, "normalization-round-trip", criterion_normalize_roundtrip},
    {4, "mask-plan-exactness", criterion_mask_plans},
    {5, "shape-contract", criterion_shapes},
    {6, "gradient-checks", criterion_gradients},
    {7, "discriminator-sanity", criterion_discriminator_sanity},
    {8, "overfit-smoke", criterion_overfit},
    {9, "metric-oracles", criterion_metric_oracles},
    {10, "gradient-accumulation", criterion_accumulation},
    {11, "determinism", criterion_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "all") == 0) {
      wanted.clear();
      break;
    }
    wanted.push_back(std::atoi(argv[i]));
  }

  int failures = 0;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), c.number) == wanted.end()) {
      continue;
    }
    Result r;
    try {
      r = c.fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] C%02d %s: %s\n", r.pass ? "PASS" : "FAIL", c.number,
                c.slug, r.details.c_str());
    std::fflush(stdout);
    if (!r.pass) ++failures;
  }
  return failures;
}
