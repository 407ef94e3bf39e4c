// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "petsynth/cnn_discriminator.hpp"
#include "petsynth/rng.hpp"
#include "petsynth/training.hpp"

using namespace petsynth;
using nn::GradBuffer;
using nn::Tensor4;

namespace {

DataConfig tiny_data_config() {
  DataConfig cfg;
  cfg.mri_dims = {16, 16, 16};
  cfg.pet_dims = {2, 8, 8, 8};
  return cfg;
}

GeneratorConfig tiny_gen_config() {
  GeneratorConfig g;
  g.input_dims = {16, 16, 16};
  g.output_dims = {2, 8, 8, 8};
  g.depth = 1;
  g.base_channels = 4;
  g.max_channels = 8;
  return g;
}

BertConfig tiny_bert_config() {
  BertConfig b;
  b.layers = 1;
  b.hidden = 32;
  b.heads = 2;
  b.ffn = 64;
  return b;
}

std::vector<TrainSample> tiny_dataset(int n, const GeneratorConfig& gcfg) {
  const DataConfig dcfg = tiny_data_config();
  std::vector<TrainSample> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(prepare_sample(synth_pair(9000 + i, dcfg), gcfg));
  }
  return out;
}

TrainConfig tiny_train_config() {
  TrainConfig t;
  t.micro_batch = 2;
  t.accumulation_steps = 2;
  t.base_lr = 1e-3;
  t.warmup_fraction = 0.05;
  t.total_steps = 100;
  t.seed = 31;
  t.threads = 2;
  return t;
}

std::vector<std::vector<double>> snapshot(const std::vector<nn::TensorRef>& refs) {
  std::vector<std::vector<double>> out;
  for (const auto& r : refs) out.emplace_back(r.data, r.data + r.size);
  return out;
}

bool identical(const std::vector<std::vector<double>>& snap,
               const std::vector<nn::TensorRef>& refs) {
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (std::size_t j = 0; j < refs[i].size; ++j) {
      if (snap[i][j] != refs[i].data[j]) return false;
    }
  }
  return true;
}

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "petsynth_train_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("lr_at: linear warmup then constant") {
  TrainConfig cfg;
  cfg.base_lr = 1e-4;
  cfg.warmup_fraction = 0.05;
  cfg.total_steps = 1000;
  CHECK(lr_at(0, cfg) == doctest::Approx(0.0));
  CHECK(lr_at(25, cfg) == doctest::Approx(5e-5));
  CHECK(lr_at(50, cfg) == doctest::Approx(1e-4));
  CHECK(lr_at(999, cfg) == doctest::Approx(1e-4));
  // piecewise linear and continuous across the boundary
  CHECK(lr_at(49, cfg) == doctest::Approx(1e-4 * 49.0 / 50.0));
  const double just_before = lr_at(49, cfg);
  const double at_boundary = lr_at(50, cfg);
  CHECK(at_boundary - just_before == doctest::Approx(1e-4 / 50.0));
}

TEST_CASE("weighted total of the loss components") {
  LossComponents c;
  c.nsp = 1.0;
  c.mlm = 2.0;
  c.l1 = 0.5;
  LossWeights w;  // defaults 20 / 1 / 20
  CHECK(w.nsp == 20.0);
  CHECK(w.mlm == 1.0);
  CHECK(w.l1 == 20.0);
  CHECK(c.total(w, false) == doctest::Approx(32.0));
}

TEST_CASE("seeded real/generated coin is fair") {
  TrainConfig cfg = tiny_train_config();
  int real = 0;
  const int n = 1000;
  for (int step = 0; step < n; ++step) {
    Rng coin(cfg.seed, Stream::RealGenCoin, static_cast<std::uint64_t>(step), 0);
    if (coin.uniform() < 0.5) ++real;
  }
  const double frac = static_cast<double>(real) / n;
  CHECK(frac >= 0.45);
  CHECK(frac <= 0.55);
}

TEST_CASE("NSP cross-entropy endpoints") {
  Eigen::RowVectorXd confident(2), uniform(2);
  confident << 20.0, -20.0;
  uniform << 0.3, 0.3;
  CHECK(nn::softmax_cross_entropy(confident, kNspRealClass, nullptr) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(nn::softmax_cross_entropy(uniform, kNspRealClass, nullptr) ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("prepare_sample tokenizes the normalized pair once") {
  const GeneratorConfig gcfg = tiny_gen_config();
  const PairSample pair = synth_pair(77, tiny_data_config());
  const TrainSample s = prepare_sample(pair, gcfg);
  CHECK(s.mri_norm.size() == 16u * 16 * 16);
  CHECK(s.pet_norm.size() == 2u * 8 * 8 * 8);
  for (int id : s.mri_ids) {
    CHECK(id >= kValueIdMin);
    CHECK(id <= kValueIdMax);
  }
  // stats must match a recompute from the raw MRI
  const auto re = compute_stats(pair.mri);
  CHECK(s.stats.mean == doctest::Approx(re.mean));
  CHECK(s.stats.std == doctest::Approx(re.std));
}

TEST_CASE("generator L1 term vanishes when generated equals real") {
  Trainer trainer(tiny_gen_config(), tiny_bert_config(), tiny_train_config(),
                  LossWeights{}, tiny_dataset(1, tiny_gen_config()));
  // overwrite the target with the generator's own output
  std::vector<TrainSample> data = trainer.dataset();
  TrainSample s = data[0];
  Generator::Workspace ws;
  const Tensor4& out = trainer.generator().forward(s.mri_norm, ws);
  s.pet_norm.assign(out.v.begin(), out.v.end());
  const LossComponents c = trainer.generator_sample_pass(s, LossWeights{}, 5, nullptr);
  CHECK(c.l1 == doctest::Approx(0.0));
}

TEST_CASE("per-component generator gradients are nonzero at random init") {
  Trainer trainer(tiny_gen_config(), tiny_bert_config(), tiny_train_config(),
                  LossWeights{}, tiny_dataset(1, tiny_gen_config()));
  const TrainSample& s = trainer.dataset()[0];
  const LossWeights masks[3] = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  const char* names[3] = {"nsp", "mlm", "l1"};
  for (int k = 0; k < 3; ++k) {
    GradBuffer g(trainer.generator().params());
    trainer.generator_sample_pass(s, masks[k], 17, &g);
    INFO("component ", names[k]);
    CHECK(g.squared_norm() > 0.0);
  }
}

TEST_CASE("straight-through path reaches the generator output") {
  // MLM-only gradients must flow through quantized tokens back to voxels.
  Trainer trainer(tiny_gen_config(), tiny_bert_config(), tiny_train_config(),
                  LossWeights{}, tiny_dataset(1, tiny_gen_config()));
  GradBuffer g(trainer.generator().params());
  trainer.generator_sample_pass(trainer.dataset()[0], {0.0, 1.0, 0.0}, 23, &g);
  CHECK(g.squared_norm() > 0.0);
}

TEST_CASE("discriminator update leaves generator parameters bit-identical") {
  Trainer trainer(tiny_gen_config(), tiny_bert_config(), tiny_train_config(),
                  LossWeights{}, tiny_dataset(2, tiny_gen_config()));
  const auto gen_snap = snapshot(trainer.generator().params());
  const auto bert_snap = snapshot(trainer.bert().params());
  trainer.discriminator_update(1);  // step 1: nonzero lr
  CHECK(identical(gen_snap, trainer.generator().params()));
  CHECK(!identical(bert_snap, trainer.bert().params()));

  const auto gen_snap2 = snapshot(trainer.generator().params());
  const auto bert_snap2 = snapshot(trainer.bert().params());
  trainer.generator_update(1);
  CHECK(!identical(gen_snap2, trainer.generator().params()));
  CHECK(identical(bert_snap2, trainer.bert().params()));
}

TEST_CASE("gradient accumulation equals one large batch") {
  const GeneratorConfig gcfg = tiny_gen_config();
  auto data = tiny_dataset(4, gcfg);

  TrainConfig split = tiny_train_config();
  split.micro_batch = 2;
  split.accumulation_steps = 2;
  TrainConfig fused = tiny_train_config();
  fused.micro_batch = 4;
  fused.accumulation_steps = 1;

  Trainer a(gcfg, tiny_bert_config(), split, LossWeights{}, data);
  Trainer b(gcfg, tiny_bert_config(), fused, LossWeights{}, data);

  const GradBuffer ga = a.accumulate_generator_gradients(0);
  const GradBuffer gb = b.accumulate_generator_gradients(0);
  REQUIRE(ga.count() == gb.count());
  for (std::size_t t = 0; t < ga.count(); ++t) {
    const auto& sa = ga.slot(static_cast<int>(t));
    const auto& sb = gb.slot(static_cast<int>(t));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
      num += (sa[i] - sb[i]) * (sa[i] - sb[i]);
      den += sb[i] * sb[i];
    }
    CHECK(std::sqrt(num) <= 1e-5 * std::max(1e-30, std::sqrt(den)));
  }
}

TEST_CASE("resume from checkpoint reproduces losses bit-for-bit") {
  const GeneratorConfig gcfg = tiny_gen_config();
  auto data = tiny_dataset(2, gcfg);
  TrainConfig tcfg = tiny_train_config();
  tcfg.total_steps = 20;

  Trainer full(gcfg, tiny_bert_config(), tcfg, LossWeights{}, data);
  full.run(5);
  const auto ckpt_path = temp_file("resume.ckpt");
  full.save(ckpt_path.string(), "");
  std::vector<StepRecord> uninterrupted;
  for (int i = 0; i < 5; ++i) uninterrupted.push_back(full.step());

  auto resumed = Trainer::load(ckpt_path.string(), data);
  CHECK(resumed->steps_done() == 5);
  for (int i = 0; i < 5; ++i) {
    const StepRecord r = resumed->step();
    CHECK(r.step == uninterrupted[i].step);
    CHECK(r.g_total == uninterrupted[i].g_total);
    CHECK(r.g_nsp == uninterrupted[i].g_nsp);
    CHECK(r.g_mlm == uninterrupted[i].g_mlm);
    CHECK(r.g_l1 == uninterrupted[i].g_l1);
    CHECK(r.d_nsp == uninterrupted[i].d_nsp);
    CHECK(r.d_mlm == uninterrupted[i].d_mlm);
  }
}

TEST_CASE("pure L1 training is monotone on a single repeated sample" *
          doctest::timeout(600)) {
  const GeneratorConfig gcfg = tiny_gen_config();
  TrainConfig tcfg = tiny_train_config();
  tcfg.micro_batch = 1;
  tcfg.accumulation_steps = 1;
  tcfg.base_lr = 1e-4;
  tcfg.total_steps = 50;
  LossWeights w;
  w.nsp = 0.0;
  w.mlm = 0.0;
  w.l1 = 20.0;
  Trainer trainer(gcfg, tiny_bert_config(), tcfg, w, tiny_dataset(1, gcfg));
  std::vector<double> l1s;
  for (int i = 0; i < 50; ++i) l1s.push_back(trainer.step().g_l1);
  for (std::size_t i = 1; i < l1s.size(); ++i) {
    CHECK(l1s[i] <= l1s[i - 1] + 1e-9);
  }
}

TEST_CASE("divergence guard aborts on exploding loss") {
  const GeneratorConfig gcfg = tiny_gen_config();
  TrainConfig tcfg = tiny_train_config();
  tcfg.base_lr = 1e6;
  tcfg.warmup_fraction = 0.01;
  tcfg.total_steps = 100;
  Trainer trainer(gcfg, tiny_bert_config(), tcfg, LossWeights{},
                  tiny_dataset(1, gcfg));
  bool aborted = false;
  try {
    trainer.run(20);
  } catch (const Error& e) {
    aborted = true;
    CHECK((e.code() == ErrorCode::Divergence || e.code() == ErrorCode::NonFiniteLoss));
  }
  CHECK(aborted);
}

TEST_CASE("CNN discriminator: forward shape and finite differences") {
  CnnDiscriminator cnnd(2, 51);
  CnnDiscriminator::Workspace ws;
  Tensor4 pet;
  pet.resize(2, 8, 8, 8);
  Rng rng(52, Stream::Test);
  for (auto& v : pet.v) v = rng.normal(0.0, 1.0);

  Eigen::Vector2d logits = cnnd.forward(pet, ws);
  Eigen::RowVectorXd lrow = logits.transpose(), dl;
  nn::softmax_cross_entropy(lrow, kNspRealClass, &dl);

  GradBuffer g(cnnd.params());
  Tensor4 d_in;
  cnnd.backward(ws, dl, &d_in, &g);
  CHECK(d_in.total() == pet.total());
  CHECK(g.squared_norm() > 0.0);

  auto loss = [&]() {
    CnnDiscriminator::Workspace w2;
    Eigen::RowVectorXd row = cnnd.forward(pet, w2).transpose();
    return nn::softmax_cross_entropy(row, kNspRealClass, nullptr);
  };
  Rng pick(53, Stream::Test);
  const auto& refs = cnnd.params();
  for (int probe = 0; probe < 3; ++probe) {
    const int t = static_cast<int>(pick.below(refs.size()));
    const std::size_t i = pick.below(refs[t].size);
    double* p = refs[t].data + i;
    const double h = 1e-5 * std::max(1.0, std::fabs(*p));
    const double orig = *p;
    *p = orig + h;
    const double lp = loss();
    *p = orig - h;
    const double lm = loss();
    *p = orig;
    const double fd = (lp - lm) / (2 * h);
    CHECK(std::fabs(g.slot(t)[i] - fd) <=
          1e-4 * std::max({1.0, std::fabs(g.slot(t)[i]), std::fabs(fd)}));
  }
  // input gradient against finite differences
  for (std::size_t i : {std::size_t{0}, std::size_t{500}}) {
    const double h = 1e-6;
    Tensor4 pp = pet, pm = pet;
    pp.v[i] += h;
    pm.v[i] -= h;
    CnnDiscriminator::Workspace w2;
    Eigen::RowVectorXd rp = cnnd.forward(pp, w2).transpose();
    const double lp = nn::softmax_cross_entropy(rp, kNspRealClass, nullptr);
    Eigen::RowVectorXd rm = cnnd.forward(pm, w2).transpose();
    const double lm = nn::softmax_cross_entropy(rm, kNspRealClass, nullptr);
    CHECK(std::fabs(d_in.v[i] - (lp - lm) / (2 * h)) <= 1e-5);
  }
}

TEST_CASE("training with the CNN discriminator updates all three models") {
  const GeneratorConfig gcfg = tiny_gen_config();
  TrainConfig tcfg = tiny_train_config();
  tcfg.use_cnn_d = true;
  Trainer trainer(gcfg, tiny_bert_config(), tcfg, LossWeights{},
                  tiny_dataset(2, gcfg));
  REQUIRE(trainer.cnn_discriminator() != nullptr);
  const auto cnn_snap = snapshot(trainer.cnn_discriminator()->params());
  const auto gen_snap = snapshot(trainer.generator().params());
  trainer.step();  // lr 0 at step 0: moments move, params stay
  const StepRecord rec = trainer.step();
  CHECK(!identical(cnn_snap, trainer.cnn_discriminator()->params()));
  CHECK(!identical(gen_snap, trainer.generator().params()));
  CHECK(std::isfinite(rec.g_total));
}
