// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "petsynth/bert.hpp"
#include "petsynth/cnn_discriminator.hpp"
#include "petsynth/generator.hpp"
#include "petsynth/volume.hpp"

namespace petsynth {

struct LossWeights {
  double nsp = 20.0;
  double mlm = 1.0;
  double l1 = 20.0;
};

struct TrainConfig {
  int micro_batch = 2;
  int accumulation_steps = 2;
  double base_lr = 1e-4;
  double warmup_fraction = 0.05;
  long total_steps = 300;
  std::uint64_t seed = 1;
  bool use_cnn_d = false;
  long checkpoint_every = 0;  // 0: only the final checkpoint
  int threads = 2;
  bool l1_on_restored = false;

  void validate() const;
};

// Linear ramp 0 -> base_lr over the first warmup_fraction * total_steps
// steps, constant base_lr afterwards.
double lr_at(long step, const TrainConfig& cfg);

// A pair preprocessed into model space: normalized f64 buffers plus the real
// token ids (computed once, reused every step).
struct TrainSample {
  std::string id;
  NormalizationStats stats;
  std::vector<double> mri_norm;
  std::vector<double> pet_norm;
  std::array<int, kSummaryLength> mri_ids{};
  std::array<int, kSummaryLength> pet_ids{};
};

TrainSample prepare_sample(const PairSample& pair, const GeneratorConfig& gcfg);

struct LossComponents {
  double nsp = 0.0;
  double mlm = 0.0;
  double l1 = 0.0;
  double cnn = 0.0;

  double total(const LossWeights& w, bool with_cnn) const {
    double t = w.nsp * nsp + w.mlm * mlm + w.l1 * l1;
    if (with_cnn) t += w.nsp * cnn;
    return t;
  }
};

struct StepRecord {
  long step = 0;  // 1-based in reports
  double lr = 0.0;
  double g_total = 0.0, g_nsp = 0.0, g_mlm = 0.0, g_l1 = 0.0;
  double d_nsp = 0.0, d_mlm = 0.0;
};

inline constexpr const char* kLossCsvHeader =
    "step,lr,g_total,g_nsp,g_mlm,g_l1,d_nsp,d_mlm";
std::string format_csv_row(const StepRecord& r);

// Alternating adversarial trainer: one discriminator update (NSP + MLM, fair
// seeded coin picking real vs generated PET per sample) followed by one
// generator update (weighted NSP + MLM + L1) per step. Generator and
// discriminator own separate Adam optimizers and never share moments. All
// per-step randomness is derived from (seed, step, slot), so resuming from a
// checkpoint is bit-exact.
class Trainer {
 public:
  Trainer(const GeneratorConfig& gcfg, const BertConfig& bcfg,
          const TrainConfig& tcfg, const LossWeights& weights,
          std::vector<TrainSample> dataset);
  ~Trainer();

  StepRecord step();
  void run(long steps, const std::function<void(const StepRecord&)>& on_step = {});

  long steps_done() const { return step_; }
  const std::vector<StepRecord>& history() const { return history_; }

  Generator& generator() { return *gen_; }
  const Generator& generator() const { return *gen_; }
  Bert& bert() { return *bert_; }
  CnnDiscriminator* cnn_discriminator() { return cnnd_.get(); }
  const TrainConfig& train_config() const { return tcfg_; }
  const LossWeights& weights() const { return weights_; }
  const std::vector<TrainSample>& dataset() const { return dataset_; }

  // Building blocks, exposed for tests and evaluation. `mask_seed` feeds
  // plan_mask; gradients are accumulated when buffers are non-null.
  LossComponents generator_sample_pass(const TrainSample& sample,
                                       const LossWeights& weights,
                                       std::uint64_t mask_seed,
                                       nn::GradBuffer* gen_grads);
  LossComponents discriminator_sample_pass(const TrainSample& sample,
                                           bool use_real, std::uint64_t mask_seed,
                                           nn::GradBuffer* bert_grads,
                                           nn::GradBuffer* cnnd_grads);

  // Full-phase gradient accumulation for a given step index, without applying
  // any update; sample selection, coins and masks match what step() would do.
  nn::GradBuffer accumulate_generator_gradients(long step_index,
                                                LossComponents* avg = nullptr);

  // One phase of the alternation, applying the corresponding Adam update.
  // step() is discriminator_update followed by generator_update.
  LossComponents discriminator_update(long step_index);
  LossComponents generator_update(long step_index);

  // Mean train-set L1 between generated and real normalized PET.
  double dataset_l1();

  void save(const std::string& path, const std::string& extra_meta_json) const;
  static std::unique_ptr<Trainer> load(const std::string& path,
                                       std::vector<TrainSample> dataset);

  // Generator-only restore, for inference paths that need no optimizer state.
  static std::unique_ptr<Generator> load_generator(const std::string& path);

 private:
  struct Worker;

  const TrainSample& sample_for(long step_index, int slot);
  LossComponents generator_pass_impl(const TrainSample& sample,
                                     const LossWeights& weights,
                                     std::uint64_t mask_seed, Worker& w,
                                     nn::GradBuffer* gen_grads);
  LossComponents discriminator_pass_impl(const TrainSample& sample, bool use_real,
                                         std::uint64_t mask_seed, Worker& w,
                                         nn::GradBuffer* bert_grads,
                                         nn::GradBuffer* cnnd_grads);
  void check_guard(double g_total, double d_total);

  GeneratorConfig gcfg_;
  BertConfig bcfg_;
  TrainConfig tcfg_;
  LossWeights weights_;
  std::vector<TrainSample> dataset_;

  std::unique_ptr<Generator> gen_;
  std::unique_ptr<Bert> bert_;
  std::unique_ptr<CnnDiscriminator> cnnd_;
  nn::Adam adam_g_, adam_d_, adam_c_;

  std::vector<std::unique_ptr<Worker>> workers_;
  std::vector<int> pass_perm_;
  long perm_pass_ = -1;

  long step_ = 0;
  double initial_g_total_ = -1.0;
  double initial_d_total_ = -1.0;
  std::vector<StepRecord> history_;
};

}  // namespace petsynth
