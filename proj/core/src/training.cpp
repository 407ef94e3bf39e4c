// SPDX-License-Identifier: Apache-2.0
#include "petsynth/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <numeric>

#include "petsynth/checkpoint.hpp"
#include "json_util.hpp"

namespace petsynth {

using nn::GradBuffer;
using nn::MatrixXd;
using nn::Tensor4;

namespace {

// Window half-width for the embedding-curve derivative in the
// straight-through path (see generator_pass_impl).
int ste_neighbor_radius() {
  if (const char* dev = std::getenv("PETSYNTH_STE_RADIUS_DEV")) {
    return std::atoi(dev);
  }
  return 16;
}
const int kSteNeighborRadius = ste_neighbor_radius();

// Per-slot bound on the straight-through gradient. 512 token impulses land
// on single voxels while the L1 term spreads over the whole volume; without
// a bound the adversarial term owns every shared weight once the
// discriminator saturates.
double ste_slot_clip() {
  if (const char* dev = std::getenv("PETSYNTH_STE_CLIP_DEV")) {
    return std::atof(dev);
  }
  return 0.1;
}
const double kSteSlotClip = ste_slot_clip();

}  // namespace

void TrainConfig::validate() const {
  require(micro_batch >= 1, ErrorCode::ConfigError, "micro_batch must be >= 1");
  require(accumulation_steps >= 1, ErrorCode::ConfigError,
          "accumulation_steps must be >= 1");
  require(base_lr > 0.0, ErrorCode::ConfigError, "base_lr must be positive");
  require(warmup_fraction > 0.0 && warmup_fraction < 1.0, ErrorCode::ConfigError,
          "warmup_fraction must lie in (0, 1)");
  require(total_steps >= 1, ErrorCode::ConfigError, "total_steps must be >= 1");
  require(threads >= 1, ErrorCode::ConfigError, "threads must be >= 1");
}

double lr_at(long step, const TrainConfig& cfg) {
  const double warmup_steps = cfg.warmup_fraction * static_cast<double>(cfg.total_steps);
  if (static_cast<double>(step) < warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) / warmup_steps;
  }
  return cfg.base_lr;
}

std::string format_csv_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                r.step, r.lr, r.g_total, r.g_nsp, r.g_mlm, r.g_l1, r.d_nsp,
                r.d_mlm);
  return buf;
}

TrainSample prepare_sample(const PairSample& pair, const GeneratorConfig& gcfg) {
  require(pair.mri.d() == gcfg.input_dims[0] && pair.mri.h() == gcfg.input_dims[1] &&
              pair.mri.w() == gcfg.input_dims[2],
          ErrorCode::DimMismatch, "pair MRI dims do not match generator config");
  require(pair.pet.dims() == gcfg.output_dims, ErrorCode::DimMismatch,
          "pair PET dims do not match generator config");

  TrainSample s;
  s.id = pair.id;
  auto [mri_n, stats] = normalize_mri(pair.mri);
  s.stats = stats;
  Volume pet_n = normalize_pet(pair.pet, stats);
  s.mri_norm.assign(mri_n.values().begin(), mri_n.values().end());
  s.pet_norm.assign(pet_n.values().begin(), pet_n.values().end());

  const auto mri_sum = summarize_raw(s.mri_norm, mri_n.dims(), Modality::MRI);
  const auto pet_sum = summarize_raw(s.pet_norm, pet_n.dims(), Modality::PET);
  s.mri_ids = quantize(mri_sum.summary);
  s.pet_ids = quantize(pet_sum.summary);
  return s;
}

struct Trainer::Worker {
  Generator::Workspace gen_ws;
  Bert::Workspace bert_ws;
  CnnDiscriminator::Workspace cnnd_ws;
  GradBuffer gen_grads, bert_grads, cnnd_grads;
  LossComponents loss;
  bool use_real = false;
};

Trainer::Trainer(const GeneratorConfig& gcfg, const BertConfig& bcfg,
                 const TrainConfig& tcfg, const LossWeights& weights,
                 std::vector<TrainSample> dataset)
    : gcfg_(gcfg), bcfg_(bcfg), tcfg_(tcfg), weights_(weights),
      dataset_(std::move(dataset)) {
  tcfg_.validate();
  require(!dataset_.empty(), ErrorCode::MissingData, "trainer needs data");
  gen_ = std::make_unique<Generator>(gcfg_, tcfg_.seed);
  bert_ = std::make_unique<Bert>(bcfg_, tcfg_.seed);
  adam_g_ = nn::Adam(gen_->params());
  adam_d_ = nn::Adam(bert_->params());
  if (tcfg_.use_cnn_d) {
    cnnd_ = std::make_unique<CnnDiscriminator>(gcfg_.output_dims[0], tcfg_.seed);
    adam_c_ = nn::Adam(cnnd_->params());
  }
  workers_.resize(tcfg_.micro_batch);
  for (auto& w : workers_) w = std::make_unique<Worker>();
}

Trainer::~Trainer() = default;

const TrainSample& Trainer::sample_for(long step_index, int slot) {
  const long batch = static_cast<long>(tcfg_.micro_batch) * tcfg_.accumulation_steps;
  const long g = step_index * batch + slot;
  const long n = static_cast<long>(dataset_.size());
  const long pass = g / n;
  if (pass != perm_pass_) {
    pass_perm_.resize(n);
    std::iota(pass_perm_.begin(), pass_perm_.end(), 0);
    Rng rng(tcfg_.seed, Stream::SampleOrder, static_cast<std::uint64_t>(pass));
    for (long i = n - 1; i > 0; --i) {
      const long j = static_cast<long>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(pass_perm_[i], pass_perm_[j]);
    }
    perm_pass_ = pass;
  }
  return dataset_[pass_perm_[g % n]];
}

namespace {

int real_id_at(const TrainSample& s, int pos) {
  if (pos >= 1 && pos <= 512) return s.mri_ids[pos - 1];
  if (pos >= 514 && pos <= 1025) return s.pet_ids[pos - 514];
  fail(ErrorCode::InvalidArgument, "masked position outside value slots");
}

// Mean cross-entropy of the masked positions against the real ids; fills
// dlogits (scaled by `scale` per row, already divided by the count).
double mlm_loss(const MatrixXd& logits, const MaskPlan& plan,
                const TrainSample& s, double scale, MatrixXd* dlogits) {
  const long m = logits.rows();
  double loss = 0.0;
  if (dlogits != nullptr) dlogits->resize(m, logits.cols());
  Eigen::RowVectorXd row, drow;
  for (long i = 0; i < m; ++i) {
    row = logits.row(i);
    const int target = real_id_at(s, plan.masked_positions[i]);
    loss += nn::softmax_cross_entropy(row, target, dlogits ? &drow : nullptr);
    if (dlogits != nullptr) {
      dlogits->row(i) = drow * (scale / static_cast<double>(m));
    }
  }
  return loss / static_cast<double>(m);
}

}  // namespace

LossComponents Trainer::generator_pass_impl(const TrainSample& sample,
                                            const LossWeights& weights,
                                            std::uint64_t mask_seed, Worker& w,
                                            GradBuffer* gen_grads) {
  LossComponents out;
  const Tensor4& gen = gen_->forward(sample.mri_norm, w.gen_ws);
  const SummaryDetail det = summarize_raw(gen.v, gcfg_.output_dims, Modality::PET);
  const auto gen_ids = quantize(det.summary);
  const TokenSequence seq = assemble(sample.mri_ids, gen_ids);
  auto [masked, plan] = plan_mask(seq, mask_seed);

  const MatrixXd& hidden = bert_->encode(masked, w.bert_ws);
  Eigen::Vector2d nsp = bert_->nsp_logits(hidden);
  Eigen::RowVectorXd nsp_row = nsp.transpose(), d_nsp;
  out.nsp = nn::softmax_cross_entropy(nsp_row, kNspRealClass,
                                      gen_grads ? &d_nsp : nullptr);

  const MatrixXd mlm = bert_->mlm_logits(hidden, plan);
  MatrixXd d_mlm;
  out.mlm = mlm_loss(mlm, plan, sample, weights.mlm, gen_grads ? &d_mlm : nullptr);

  // L1 in normalized PET space by default; optionally in restored units.
  const double l1_scale = tcfg_.l1_on_restored
                              ? std::max(sample.stats.std / 10.0, kStdEpsilon)
                              : 1.0;
  const std::size_t n_vox = gen.total();
  double l1 = 0.0;
  for (std::size_t i = 0; i < n_vox; ++i) {
    l1 += std::fabs(gen.v[i] - sample.pet_norm[i]);
  }
  out.l1 = l1 * l1_scale / static_cast<double>(n_vox);

  if (gen_grads == nullptr) {
    if (cnnd_) {
      Eigen::Vector2d cl = cnnd_->forward(gen, w.cnnd_ws);
      Eigen::RowVectorXd cl_row = cl.transpose();
      out.cnn = nn::softmax_cross_entropy(cl_row, kNspRealClass, nullptr);
    }
    return out;
  }

  MatrixXd d_hidden = MatrixXd::Zero(kSequenceLength, bcfg_.hidden);
  bert_->nsp_backward(hidden, d_nsp * weights.nsp, d_hidden, nullptr);
  bert_->mlm_backward(hidden, plan, d_mlm, d_hidden, nullptr);
  bert_->backward(masked, w.bert_ws, d_hidden, nullptr);

  // Straight-through route: gradient at an unmasked generated-PET embedding
  // becomes a gradient on the summary value (identity through rounding on the
  // unfolded band, zero through the folds, embedding table treated as samples
  // of a value curve), then lands on the abs-max voxel of its sub-region.
  // The curve derivative is a central difference over a widened id window;
  // +-1-id differences of a fresh embedding table are pure noise and the
  // 10^3 quantization Jacobian amplifies them past the L1 signal.
  Tensor4 d_gen;
  d_gen.resize(gen.c, gen.d, gen.h, gen.w);
  const MatrixXd& emb = bert_->token_embeddings();
  for (int s = 0; s < kSummaryLength; ++s) {
    const int pos = 514 + s;
    if (masked.ids[pos] == kMaskId) continue;
    const double q = std::round(det.summary.values[s] * 1000.0);
    if (q < 1.0 || q > 10000.0) continue;  // folded: zero gradient
    const int id = gen_ids[s];
    const int lo = std::max(id - kSteNeighborRadius, kValueIdMin);
    const int hi = std::min(id + kSteNeighborRadius, kValueIdMax);
    const double denom = static_cast<double>(hi - lo);
    if (denom <= 0.0) continue;
    const double dv =
        1000.0 * (w.bert_ws.d_emb.row(pos).dot(emb.row(hi) - emb.row(lo))) / denom;
    d_gen.v[det.argmax[s]] += std::clamp(dv, -kSteSlotClip, kSteSlotClip);
  }

  const double l1_gscale =
      weights.l1 * l1_scale / static_cast<double>(n_vox);
  for (std::size_t i = 0; i < n_vox; ++i) {
    const double diff = gen.v[i] - sample.pet_norm[i];
    if (diff > 0.0) {
      d_gen.v[i] += l1_gscale;
    } else if (diff < 0.0) {
      d_gen.v[i] -= l1_gscale;
    }
  }

  if (cnnd_) {
    Eigen::Vector2d cl = cnnd_->forward(gen, w.cnnd_ws);
    Eigen::RowVectorXd cl_row = cl.transpose(), d_cl;
    out.cnn = nn::softmax_cross_entropy(cl_row, kNspRealClass, &d_cl);
    Tensor4 d_from_cnn;
    cnnd_->backward(w.cnnd_ws, d_cl * weights.nsp, &d_from_cnn, nullptr);
    for (std::size_t i = 0; i < n_vox; ++i) d_gen.v[i] += d_from_cnn.v[i];
  }

  gen_->backward(w.gen_ws, d_gen, gen_grads);
  return out;
}

LossComponents Trainer::discriminator_pass_impl(const TrainSample& sample,
                                                bool use_real,
                                                std::uint64_t mask_seed, Worker& w,
                                                GradBuffer* bert_grads,
                                                GradBuffer* cnnd_grads) {
  LossComponents out;
  const Tensor4* pet_vol = nullptr;
  std::array<int, kSummaryLength> pet_ids;
  Tensor4 real_vol;
  if (use_real) {
    pet_ids = sample.pet_ids;
    if (cnnd_) {
      real_vol.resize(gcfg_.output_dims[0], gcfg_.output_dims[1],
                      gcfg_.output_dims[2], gcfg_.output_dims[3]);
      std::copy(sample.pet_norm.begin(), sample.pet_norm.end(),
                real_vol.v.begin());
      pet_vol = &real_vol;
    }
  } else {
    const Tensor4& gen = gen_->forward(sample.mri_norm, w.gen_ws);
    const SummaryDetail det =
        summarize_raw(gen.v, gcfg_.output_dims, Modality::PET);
    pet_ids = quantize(det.summary);
    pet_vol = &gen;
  }

  const TokenSequence seq = assemble(sample.mri_ids, pet_ids);
  auto [masked, plan] = plan_mask(seq, mask_seed);
  const int label = use_real ? kNspRealClass : kNspGeneratedClass;

  const MatrixXd& hidden = bert_->encode(masked, w.bert_ws);
  Eigen::Vector2d nsp = bert_->nsp_logits(hidden);
  Eigen::RowVectorXd nsp_row = nsp.transpose(), d_nsp;
  out.nsp = nn::softmax_cross_entropy(nsp_row, label,
                                      bert_grads ? &d_nsp : nullptr);

  const MatrixXd mlm = bert_->mlm_logits(hidden, plan);
  MatrixXd d_mlm;
  out.mlm = mlm_loss(mlm, plan, sample, 1.0, bert_grads ? &d_mlm : nullptr);

  if (bert_grads != nullptr) {
    MatrixXd d_hidden = MatrixXd::Zero(kSequenceLength, bcfg_.hidden);
    bert_->nsp_backward(hidden, d_nsp, d_hidden, bert_grads);
    bert_->mlm_backward(hidden, plan, d_mlm, d_hidden, bert_grads);
    bert_->backward(masked, w.bert_ws, d_hidden, bert_grads);
  }

  if (cnnd_ && pet_vol != nullptr) {
    Eigen::Vector2d cl = cnnd_->forward(*pet_vol, w.cnnd_ws);
    Eigen::RowVectorXd cl_row = cl.transpose(), d_cl;
    out.cnn = nn::softmax_cross_entropy(cl_row, label,
                                        cnnd_grads ? &d_cl : nullptr);
    if (cnnd_grads != nullptr) {
      cnnd_->backward(w.cnnd_ws, d_cl, nullptr, cnnd_grads);
    }
  }
  return out;
}

LossComponents Trainer::generator_sample_pass(const TrainSample& sample,
                                              const LossWeights& weights,
                                              std::uint64_t mask_seed,
                                              GradBuffer* gen_grads) {
  return generator_pass_impl(sample, weights, mask_seed, *workers_[0], gen_grads);
}

LossComponents Trainer::discriminator_sample_pass(const TrainSample& sample,
                                                  bool use_real,
                                                  std::uint64_t mask_seed,
                                                  GradBuffer* bert_grads,
                                                  GradBuffer* cnnd_grads) {
  return discriminator_pass_impl(sample, use_real, mask_seed, *workers_[0],
                                 bert_grads, cnnd_grads);
}

GradBuffer Trainer::accumulate_generator_gradients(long step_index,
                                                   LossComponents* avg) {
  const int micro = tcfg_.micro_batch;
  const int accum = tcfg_.accumulation_steps;
  const long batch = static_cast<long>(micro) * accum;
  const int n_threads = std::min(tcfg_.threads, micro);

  std::vector<const TrainSample*> picks(batch);
  for (long s = 0; s < batch; ++s) {
    picks[s] = &sample_for(step_index, static_cast<int>(s));
  }

  GradBuffer total(gen_->params());
  GradBuffer micro_buf(gen_->params());
  LossComponents sum;
  for (int m = 0; m < accum; ++m) {
    auto run_slot = [&](int j) {
      const int slot = m * micro + j;
      Worker& w = *workers_[j];
      w.gen_grads.init(gen_->params());
      const std::uint64_t mask_seed =
          mix_seed(tcfg_.seed, Stream::MaskPlan, static_cast<std::uint64_t>(step_index),
                   static_cast<std::uint64_t>(slot) * 2 + 1);
      w.loss = generator_pass_impl(*picks[slot], weights_, mask_seed, w,
                                   &w.gen_grads);
    };
    if (n_threads > 1) {
      std::vector<std::future<void>> futs;
      for (int j = 1; j < micro; ++j) {
        futs.push_back(std::async(std::launch::async, run_slot, j));
      }
      run_slot(0);
      for (auto& f : futs) f.get();
    } else {
      for (int j = 0; j < micro; ++j) run_slot(j);
    }
    micro_buf.zero();
    for (int j = 0; j < micro; ++j) {
      micro_buf.add_scaled(workers_[j]->gen_grads, 1.0 / micro);
      sum.nsp += workers_[j]->loss.nsp;
      sum.mlm += workers_[j]->loss.mlm;
      sum.l1 += workers_[j]->loss.l1;
      sum.cnn += workers_[j]->loss.cnn;
    }
    total.add_scaled(micro_buf, 1.0 / accum);
  }
  if (avg != nullptr) {
    avg->nsp = sum.nsp / static_cast<double>(batch);
    avg->mlm = sum.mlm / static_cast<double>(batch);
    avg->l1 = sum.l1 / static_cast<double>(batch);
    avg->cnn = sum.cnn / static_cast<double>(batch);
  }
  return total;
}

LossComponents Trainer::discriminator_update(long step_index) {
  const int micro = tcfg_.micro_batch;
  const int accum = tcfg_.accumulation_steps;
  const long batch = static_cast<long>(micro) * accum;
  const int n_threads = std::min(tcfg_.threads, micro);
  const double lr = lr_at(step_index, tcfg_);

  std::vector<const TrainSample*> picks(batch);
  for (long s = 0; s < batch; ++s) {
    picks[s] = &sample_for(step_index, static_cast<int>(s));
  }

  GradBuffer d_total(bert_->params());
  GradBuffer d_micro(bert_->params());
  GradBuffer c_total, c_micro;
  if (cnnd_) {
    c_total.init(cnnd_->params());
    c_micro.init(cnnd_->params());
  }
  LossComponents d_sum;
  for (int m = 0; m < accum; ++m) {
    auto run_slot = [&](int j) {
      const int slot = m * micro + j;
      Worker& w = *workers_[j];
      w.bert_grads.init(bert_->params());
      if (cnnd_) w.cnnd_grads.init(cnnd_->params());
      Rng coin(tcfg_.seed, Stream::RealGenCoin,
               static_cast<std::uint64_t>(step_index),
               static_cast<std::uint64_t>(slot));
      w.use_real = coin.uniform() < 0.5;
      const std::uint64_t mask_seed =
          mix_seed(tcfg_.seed, Stream::MaskPlan,
                   static_cast<std::uint64_t>(step_index),
                   static_cast<std::uint64_t>(slot) * 2);
      w.loss = discriminator_pass_impl(*picks[slot], w.use_real, mask_seed, w,
                                       &w.bert_grads,
                                       cnnd_ ? &w.cnnd_grads : nullptr);
    };
    if (n_threads > 1) {
      std::vector<std::future<void>> futs;
      for (int j = 1; j < micro; ++j) {
        futs.push_back(std::async(std::launch::async, run_slot, j));
      }
      run_slot(0);
      for (auto& f : futs) f.get();
    } else {
      for (int j = 0; j < micro; ++j) run_slot(j);
    }
    d_micro.zero();
    if (cnnd_) c_micro.zero();
    for (int j = 0; j < micro; ++j) {
      d_micro.add_scaled(workers_[j]->bert_grads, 1.0 / micro);
      if (cnnd_) c_micro.add_scaled(workers_[j]->cnnd_grads, 1.0 / micro);
      d_sum.nsp += workers_[j]->loss.nsp;
      d_sum.mlm += workers_[j]->loss.mlm;
      d_sum.cnn += workers_[j]->loss.cnn;
    }
    d_total.add_scaled(d_micro, 1.0 / accum);
    if (cnnd_) c_total.add_scaled(c_micro, 1.0 / accum);
  }
  adam_d_.step(bert_->params(), d_total, lr);
  if (cnnd_) adam_c_.step(cnnd_->params(), c_total, lr);

  LossComponents avg;
  avg.nsp = d_sum.nsp / static_cast<double>(batch);
  avg.mlm = d_sum.mlm / static_cast<double>(batch);
  avg.cnn = d_sum.cnn / static_cast<double>(batch);
  return avg;
}

LossComponents Trainer::generator_update(long step_index) {
  LossComponents g_avg;
  GradBuffer g_total = accumulate_generator_gradients(step_index, &g_avg);
  adam_g_.step(gen_->params(), g_total, lr_at(step_index, tcfg_));
  return g_avg;
}

StepRecord Trainer::step() {
  const LossComponents d_avg = discriminator_update(step_);
  const LossComponents g_avg = generator_update(step_);

  StepRecord rec;
  rec.step = step_ + 1;
  rec.lr = lr_at(step_, tcfg_);
  rec.g_nsp = g_avg.nsp;
  rec.g_mlm = g_avg.mlm;
  rec.g_l1 = g_avg.l1;
  rec.g_total = g_avg.total(weights_, cnnd_ != nullptr);
  rec.d_nsp = d_avg.nsp;
  rec.d_mlm = d_avg.mlm;

  check_guard(rec.g_total, rec.d_nsp + rec.d_mlm);
  ++step_;
  history_.push_back(rec);
  return rec;
}

void Trainer::run(long steps, const std::function<void(const StepRecord&)>& on_step) {
  for (long i = 0; i < steps; ++i) {
    const StepRecord rec = step();
    if (on_step) on_step(rec);
  }
}

void Trainer::check_guard(double g_total, double d_total) {
  require(std::isfinite(g_total) && std::isfinite(d_total),
          ErrorCode::NonFiniteLoss,
          "non-finite loss at step " + std::to_string(step_ + 1) +
              " (g_total=" + std::to_string(g_total) +
              ", d_total=" + std::to_string(d_total) + ")");
  if (initial_g_total_ < 0.0) {
    initial_g_total_ = g_total;
    initial_d_total_ = d_total;
    return;
  }
  const double limit_g = 1e3 * initial_g_total_;
  const double limit_d = 1e3 * initial_d_total_;
  require(g_total <= limit_g && d_total <= limit_d, ErrorCode::Divergence,
          "loss diverged at step " + std::to_string(step_ + 1) + " (g_total=" +
              std::to_string(g_total) + ", d_total=" + std::to_string(d_total) +
              ", initial=" + std::to_string(initial_g_total_) + "/" +
              std::to_string(initial_d_total_) + ")");
}

double Trainer::dataset_l1() {
  double total = 0.0;
  Worker& w = *workers_[0];
  for (const auto& s : dataset_) {
    const Tensor4& gen = gen_->forward(s.mri_norm, w.gen_ws);
    double l1 = 0.0;
    for (std::size_t i = 0; i < gen.total(); ++i) {
      l1 += std::fabs(gen.v[i] - s.pet_norm[i]);
    }
    total += l1 / static_cast<double>(gen.total());
  }
  return total / static_cast<double>(dataset_.size());
}

void Trainer::save(const std::string& path, const std::string& extra_meta_json) const {
  detail::json meta;
  meta["format"] = "petsynth-train-state";
  meta["step"] = step_;
  meta["initial_g_total"] = initial_g_total_;
  meta["initial_d_total"] = initial_d_total_;
  meta["generator"] = detail::to_json(gcfg_);
  meta["bert"] = detail::to_json(bcfg_);
  meta["train"] = detail::to_json(tcfg_);
  meta["weights"] = detail::to_json(weights_);
  meta["adam_updates"] = {{"g", adam_g_.updates()},
                          {"d", adam_d_.updates()},
                          {"c", cnnd_ ? adam_c_.updates() : 0}};
  detail::json hist = detail::json::array();
  for (const auto& r : history_) {
    hist.push_back({r.step, r.lr, r.g_total, r.g_nsp, r.g_mlm, r.g_l1, r.d_nsp,
                    r.d_mlm});
  }
  meta["history"] = std::move(hist);
  if (!extra_meta_json.empty()) {
    meta["extra"] = detail::json::parse(extra_meta_json);
  }

  Checkpoint ckpt;
  ckpt.meta = meta.dump(2);
  ckpt.add_params(gen_->params());
  ckpt.add_params(bert_->params());
  ckpt.add_optimizer("adam_g", gen_->params(), adam_g_);
  ckpt.add_optimizer("adam_d", bert_->params(), adam_d_);
  if (cnnd_) {
    ckpt.add_params(cnnd_->params());
    ckpt.add_optimizer("adam_c", cnnd_->params(), adam_c_);
  }
  save_checkpoint(path, ckpt);
}

std::unique_ptr<Generator> Trainer::load_generator(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  detail::json meta = detail::json::parse(ckpt.meta);
  require(meta.value("format", "") == "petsynth-train-state",
          ErrorCode::CheckpointMismatch, "not a trainer checkpoint: " + path);
  const GeneratorConfig gcfg = detail::generator_config_from_json(meta.at("generator"));
  auto gen = std::make_unique<Generator>(gcfg, 0);
  ckpt.restore_params(gen->params());
  return gen;
}

std::unique_ptr<Trainer> Trainer::load(const std::string& path,
                                       std::vector<TrainSample> dataset) {
  const Checkpoint ckpt = load_checkpoint(path);
  detail::json meta = detail::json::parse(ckpt.meta);
  require(meta.value("format", "") == "petsynth-train-state",
          ErrorCode::CheckpointMismatch, "not a trainer checkpoint: " + path);

  const GeneratorConfig gcfg = detail::generator_config_from_json(meta.at("generator"));
  const BertConfig bcfg = detail::bert_config_from_json(meta.at("bert"));
  const TrainConfig tcfg = detail::train_config_from_json(meta.at("train"));
  const LossWeights weights = detail::loss_weights_from_json(meta.at("weights"));

  auto trainer = std::make_unique<Trainer>(gcfg, bcfg, tcfg, weights,
                                           std::move(dataset));
  ckpt.restore_params(trainer->gen_->params());
  ckpt.restore_params(trainer->bert_->params());
  ckpt.restore_optimizer("adam_g", trainer->gen_->params(), trainer->adam_g_);
  ckpt.restore_optimizer("adam_d", trainer->bert_->params(), trainer->adam_d_);
  trainer->adam_g_.set_updates(meta.at("adam_updates").at("g").get<long>());
  trainer->adam_d_.set_updates(meta.at("adam_updates").at("d").get<long>());
  if (trainer->cnnd_) {
    ckpt.restore_params(trainer->cnnd_->params());
    ckpt.restore_optimizer("adam_c", trainer->cnnd_->params(), trainer->adam_c_);
    trainer->adam_c_.set_updates(meta.at("adam_updates").at("c").get<long>());
  }
  trainer->step_ = meta.at("step").get<long>();
  trainer->initial_g_total_ = meta.at("initial_g_total").get<double>();
  trainer->initial_d_total_ = meta.at("initial_d_total").get<double>();
  for (const auto& r : meta.at("history")) {
    StepRecord rec;
    rec.step = r.at(0).get<long>();
    rec.lr = r.at(1).get<double>();
    rec.g_total = r.at(2).get<double>();
    rec.g_nsp = r.at(3).get<double>();
    rec.g_mlm = r.at(4).get<double>();
    rec.g_l1 = r.at(5).get<double>();
    rec.d_nsp = r.at(6).get<double>();
    rec.d_mlm = r.at(7).get<double>();
    trainer->history_.push_back(rec);
  }
  return trainer;
}

}  // namespace petsynth
