// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry points: synthetic paired-data generation, adversarial
// training, evaluation with metrics/histograms, and tokenizer debugging.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "manifest.hpp"
#include "petsynth/config.hpp"
#include "petsynth/metrics.hpp"
#include "petsynth/tokenizer.hpp"
#include "petsynth/training.hpp"

namespace fs = std::filesystem;
using namespace petsynth;

namespace {

constexpr const char* kVersion = "0.1.0";

// Stable exit codes, documented in the README.
//   0 success, 1 internal error, 2 config/usage, 3 missing data,
//   4 file I/O or container corruption, 5 divergence abort,
//   6 checkpoint version/config mismatch.
int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ModalityMismatch:
      return 2;
    case ErrorCode::MissingData:
      return 3;
    case ErrorCode::IoError:
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::PayloadMismatch:
      return 4;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::Divergence:
      return 5;
    case ErrorCode::CheckpointVersion:
    case ErrorCode::CheckpointMismatch:
      return 6;
    default:
      return 1;
  }
}

AppConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return parse_config_text("{}");
  return load_config(path);
}

std::string pair_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair-%06d", index);
  return buf;
}

struct LoadedPair {
  std::string stem;
  PairSample sample;
};

// Pairs live as <stem>_mri.vol / <stem>_pet.vol, either directly in the data
// directory or under a pairs/ subdirectory.
std::vector<LoadedPair> load_pairs(const std::string& data_dir) {
  fs::path root(data_dir);
  if (fs::exists(root / "pairs")) root /= "pairs";
  require(fs::exists(root), ErrorCode::MissingData,
          "data directory not found: " + data_dir);

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    const auto pos = name.rfind("_mri.vol");
    if (pos != std::string::npos && pos + 8 == name.size()) {
      stems.push_back(name.substr(0, pos));
    }
  }
  std::sort(stems.begin(), stems.end());
  require(!stems.empty(), ErrorCode::MissingData,
          "no *_mri.vol pairs under " + root.string());

  std::vector<LoadedPair> out;
  for (const auto& stem : stems) {
    const fs::path mri_path = root / (stem + "_mri.vol");
    const fs::path pet_path = root / (stem + "_pet.vol");
    require(fs::exists(pet_path), ErrorCode::MissingData,
            "missing PET half of pair: " + pet_path.string());
    LoadedPair p;
    p.stem = stem;
    p.sample.mri = load_volume(mri_path.string());
    p.sample.pet = load_volume(pet_path.string());
    p.sample.mri_stats = compute_stats(p.sample.mri);
    p.sample.id = stem;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<TrainSample> to_train_samples(const std::vector<LoadedPair>& pairs,
                                          const GeneratorConfig& gcfg) {
  std::vector<TrainSample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(prepare_sample(p.sample, gcfg));
  return out;
}

nlohmann::json metrics_to_json(const MetricsReport& report,
                               const std::vector<std::string>& ids) {
  nlohmann::json per_pair = nlohmann::json::array();
  for (std::size_t i = 0; i < report.per_pair.size(); ++i) {
    const auto& m = report.per_pair[i];
    per_pair.push_back({{"id", i < ids.size() ? ids[i] : std::to_string(i)},
                        {"psnr", m.psnr},
                        {"ssim", m.ssim},
                        {"rmse", m.rmse},
                        {"data_range", m.data_range}});
  }
  return nlohmann::json{{"aggregate",
                         {{"psnr", report.psnr},
                          {"ssim", report.ssim},
                          {"rmse", report.rmse},
                          {"n_pairs", report.n_pairs},
                          {"data_range", report.data_range}}},
                        {"per_pair", per_pair}};
}

nlohmann::json histogram_to_json(const HistogramReport& h) {
  return nlohmann::json{{"edges", h.edges},
                        {"counts", h.counts},
                        {"min", h.min_value},
                        {"max", h.max_value},
                        {"fraction_abs_below_one", h.fraction_abs_below_one},
                        {"total", h.total}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot write: " + path.string());
  out << text;
  require(out.good(), ErrorCode::IoError, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------

int cmd_synth_data(const std::string& config_path, const std::string& out_dir,
                   int n, std::optional<std::uint64_t> seed_override) {
  AppConfig cfg = load_config_or_default(config_path);
  if (seed_override) cfg.data.seed = *seed_override;
  cfg.data.validate();

  fs::create_directories(fs::path(out_dir) / "pairs");
  cli::RunManifest manifest("synth-data", kVersion);
  manifest.set_seed(cfg.data.seed);
  manifest.set_config_json(config_to_json(cfg));
  manifest.set("n_pairs", n);

  for (int i = 0; i < n; ++i) {
    const std::uint64_t pair_seed =
        mix_seed(cfg.data.seed, Stream::SynthMri, 0x70a1u, static_cast<std::uint64_t>(i));
    const PairSample sample = synth_pair(pair_seed, cfg.data);
    const std::string stem = pair_stem(i);
    const fs::path mri_path = fs::path(out_dir) / "pairs" / (stem + "_mri.vol");
    const fs::path pet_path = fs::path(out_dir) / "pairs" / (stem + "_pet.vol");
    save_volume(mri_path.string(), sample.mri);
    save_volume(pet_path.string(), sample.pet);
    manifest.add_artifact(mri_path.string());
    manifest.add_artifact(pet_path.string());
  }
  manifest.write((fs::path(out_dir) / "manifest.json").string());
  std::cout << "wrote " << n << " pairs to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_path,
              std::optional<long> steps, std::optional<std::uint64_t> seed,
              std::optional<double> lambda_nsp, std::optional<double> lambda_mlm,
              std::optional<double> lambda_l1, bool use_cnn_d,
              std::optional<int> threads) {
  AppConfig cfg = load_config_or_default(config_path);
  nlohmann::json overrides = nlohmann::json::object();
  if (steps) {
    cfg.train.total_steps = *steps;
    overrides["steps"] = *steps;
  }
  if (seed) {
    cfg.train.seed = *seed;
    overrides["seed"] = *seed;
  }
  if (lambda_nsp) {
    cfg.weights.nsp = *lambda_nsp;
    overrides["lambda_nsp"] = *lambda_nsp;
  }
  if (lambda_mlm) {
    cfg.weights.mlm = *lambda_mlm;
    overrides["lambda_mlm"] = *lambda_mlm;
  }
  if (lambda_l1) {
    cfg.weights.l1 = *lambda_l1;
    overrides["lambda_l1"] = *lambda_l1;
  }
  if (use_cnn_d) {
    cfg.train.use_cnn_d = true;
    overrides["use_cnn_d"] = true;
  }
  if (threads) {
    cfg.train.threads = *threads;
    overrides["threads"] = *threads;
  }

  const GeneratorConfig gcfg = cfg.generator_config();
  const auto pairs = load_pairs(data_dir);
  auto samples = to_train_samples(pairs, gcfg);

  fs::create_directories(out_dir);
  cli::RunManifest manifest("train", kVersion);
  manifest.set_seed(cfg.train.seed);
  manifest.set_config_json(config_to_json(cfg));
  manifest.set_overrides(overrides);
  manifest.set("data_dir", data_dir);
  manifest.set("n_pairs", static_cast<int>(pairs.size()));

  std::unique_ptr<Trainer> trainer;
  if (!resume_path.empty()) {
    trainer = Trainer::load(resume_path, std::move(samples));
    manifest.set("resumed_from", resume_path);
  } else {
    trainer = std::make_unique<Trainer>(gcfg, cfg.bert, cfg.train, cfg.weights,
                                        std::move(samples));
  }

  const fs::path csv_path = fs::path(out_dir) / "loss.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  require(csv.good(), ErrorCode::IoError, "cannot write: " + csv_path.string());
  csv << kLossCsvHeader << "\n";
  manifest.add_artifact(csv_path.string());

  const long target = cfg.train.total_steps;
  while (trainer->steps_done() < target) {
    const StepRecord rec = trainer->step();
    csv << format_csv_row(rec) << "\n";
    csv.flush();
    if (cfg.train.checkpoint_every > 0 &&
        trainer->steps_done() % cfg.train.checkpoint_every == 0 &&
        trainer->steps_done() < target) {
      const fs::path ckpt = fs::path(out_dir) /
                            ("checkpoint-" + std::to_string(trainer->steps_done()) +
                             ".ckpt");
      trainer->save(ckpt.string(), "{}");
      manifest.add_artifact(ckpt.string());
    }
  }

  const fs::path final_ckpt = fs::path(out_dir) / "checkpoint-final.ckpt";
  trainer->save(final_ckpt.string(), "{}");
  manifest.add_artifact(final_ckpt.string());

  // Train-set metrics on restored values.
  std::vector<PairMetrics> per_pair;
  std::vector<std::string> ids;
  for (const auto& p : pairs) {
    const TrainSample s = prepare_sample(p.sample, gcfg);
    Generator::Workspace ws;
    const nn::Tensor4& gen = trainer->generator().forward(s.mri_norm, ws);
    std::vector<float> gen_f(gen.v.begin(), gen.v.end());
    Volume gen_norm = Volume::from_buffer(Modality::PET, 4, gcfg.output_dims,
                                          std::move(gen_f));
    const Volume restored = restore_pet(gen_norm, s.stats);
    per_pair.push_back(pair_metrics(p.sample.pet, restored));
    ids.push_back(p.stem);
  }
  const MetricsReport report = aggregate_metrics(per_pair);
  const fs::path metrics_path = fs::path(out_dir) / "metrics.json";
  write_text(metrics_path, metrics_to_json(report, ids).dump(2) + "\n");
  manifest.add_artifact(metrics_path.string());

  manifest.write((fs::path(out_dir) / "manifest.json").string());
  std::cout << "trained " << trainer->steps_done() << " steps; final PSNR "
            << report.psnr << " dB, RMSE " << report.rmse << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& out_dir, int bins, bool sanity_real) {
  const auto pairs = load_pairs(data_dir);

  std::vector<PairMetrics> per_pair;
  std::vector<std::string> ids;
  std::vector<Volume> generated;
  if (sanity_real) {
    for (const auto& p : pairs) {
      per_pair.push_back(pair_metrics(p.sample.pet, p.sample.pet));
      generated.push_back(p.sample.pet);
      ids.push_back(p.stem);
    }
  } else {
    // The checkpoint pins the generator config; mismatched data is a
    // checkpoint/config error, not a data error.
    std::unique_ptr<Generator> generator = Trainer::load_generator(checkpoint_path);
    const GeneratorConfig gcfg = generator->config();
    for (const auto& p : pairs) {
      TrainSample s;
      try {
        s = prepare_sample(p.sample, gcfg);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::DimMismatch) {
          fail(ErrorCode::CheckpointMismatch,
               std::string("checkpoint/config mismatch: ") + e.what());
        }
        throw;
      }
      Generator::Workspace ws;
      const nn::Tensor4& gen = generator->forward(s.mri_norm, ws);
      std::vector<float> gen_f(gen.v.begin(), gen.v.end());
      Volume gen_norm = Volume::from_buffer(Modality::PET, 4, gcfg.output_dims,
                                            std::move(gen_f));
      generated.push_back(restore_pet(gen_norm, s.stats));
      per_pair.push_back(pair_metrics(p.sample.pet, generated.back()));
      ids.push_back(p.stem);
    }
  }

  // Histograms of real vs generated over a common range.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::vector<const Volume*> real_ptrs, gen_ptrs;
  for (const auto& p : pairs) real_ptrs.push_back(&p.sample.pet);
  for (const auto& g : generated) gen_ptrs.push_back(&g);
  for (const auto* vols : {&real_ptrs, &gen_ptrs}) {
    for (const auto* v : *vols) {
      for (float f : v->values()) {
        lo = std::min(lo, static_cast<double>(f));
        hi = std::max(hi, static_cast<double>(f));
      }
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  const HistogramReport hist_real = histogram(real_ptrs, bins, lo, hi);
  const HistogramReport hist_gen = histogram(gen_ptrs, bins, lo, hi);

  fs::create_directories(out_dir);
  const MetricsReport report = aggregate_metrics(per_pair);
  nlohmann::json j = metrics_to_json(report, ids);
  j["histogram_real"] = histogram_to_json(hist_real);
  j["histogram_generated"] = histogram_to_json(hist_gen);
  j["generated_fraction_abs_below_one"] = hist_gen.fraction_abs_below_one;
  j["generated_max_value"] = hist_gen.max_value;
  j["generated_min_value"] = hist_gen.min_value;

  const fs::path report_path = fs::path(out_dir) / "metrics.json";
  write_text(report_path, j.dump(2) + "\n");
  const fs::path real_plot = fs::path(out_dir) / "hist_real.pgm";
  const fs::path gen_plot = fs::path(out_dir) / "hist_generated.pgm";
  write_histogram_pgm(hist_real, real_plot.string());
  write_histogram_pgm(hist_gen, gen_plot.string());

  cli::RunManifest manifest("evaluate", kVersion);
  manifest.set("checkpoint", sanity_real ? "(sanity-real)" : checkpoint_path);
  manifest.set("data_dir", data_dir);
  manifest.add_artifact(report_path.string());
  manifest.add_artifact(real_plot.string());
  manifest.add_artifact(gen_plot.string());
  manifest.write((fs::path(out_dir) / "manifest.json").string());

  std::cout << "evaluated " << report.n_pairs << " pairs: PSNR " << report.psnr
            << " dB, SSIM " << report.ssim << ", RMSE " << report.rmse
            << ", max generated " << hist_gen.max_value << ", frac |v|<1 "
            << hist_gen.fraction_abs_below_one << "\n";
  return 0;
}

int cmd_hist(const std::vector<std::string>& inputs, const std::string& out_dir,
             int bins, std::optional<double> lo_opt, std::optional<double> hi_opt) {
  std::vector<Volume> vols;
  std::vector<const Volume*> ptrs;
  for (const auto& path : inputs) vols.push_back(load_volume(path));
  for (const auto& v : vols) ptrs.push_back(&v);

  double lo = lo_opt.value_or(std::numeric_limits<double>::infinity());
  double hi = hi_opt.value_or(-std::numeric_limits<double>::infinity());
  if (!lo_opt || !hi_opt) {
    for (const auto& v : vols) {
      for (float f : v.values()) {
        if (!lo_opt) lo = std::min(lo, static_cast<double>(f));
        if (!hi_opt) hi = std::max(hi, static_cast<double>(f));
      }
    }
  }
  const HistogramReport r = histogram(ptrs, bins, lo, hi);

  fs::create_directories(out_dir);
  const fs::path json_path = fs::path(out_dir) / "histogram.json";
  const fs::path plot_path = fs::path(out_dir) / "histogram.pgm";
  write_text(json_path, histogram_to_json(r).dump(2) + "\n");
  write_histogram_pgm(r, plot_path.string());

  cli::RunManifest manifest("hist", kVersion);
  manifest.set("inputs", inputs);
  manifest.add_artifact(json_path.string());
  manifest.add_artifact(plot_path.string());
  manifest.write((fs::path(out_dir) / "manifest.json").string());

  std::cout << "histogram over [" << lo << ", " << hi << "]: " << r.total
            << " voxels, min " << r.min_value << ", max " << r.max_value
            << ", frac |v|<1 " << r.fraction_abs_below_one << "\n";
  return 0;
}

int cmd_dump_tokens(const std::string& mri_path, const std::string& pet_path,
                    const std::string& out_path) {
  const Volume mri = load_volume(mri_path);
  const Volume pet = load_volume(pet_path);
  auto [mri_norm, stats] = normalize_mri(mri);
  const Volume pet_norm = normalize_pet(pet, stats);
  const auto mri_ids = quantize(summarize(mri_norm));
  const auto pet_ids = quantize(summarize(pet_norm));
  const TokenSequence seq = assemble(mri_ids, pet_ids);
  const std::string text = format_token_ids(seq);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MRI-to-PET synthesis pipeline: volumetric generator trained "
               "against a transformer sequence discriminator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, out_dir, data_dir, resume_path, checkpoint_path;
  std::string mri_path, pet_path, token_out;
  std::vector<std::string> hist_inputs;
  int n_pairs = 4, bins = 101;
  bool use_cnn_d = false, sanity_real = false;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<double> lambda_nsp, lambda_mlm, lambda_l1, hist_lo, hist_hi;
  std::optional<int> threads;

  auto* synth = app.add_subcommand("synth-data", "Generate synthetic MRI/PET pairs");
  synth->add_option("--config", config_path, "JSON config file")
      ->envname("PETSYNTH_CONFIG");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("-n,--pairs", n_pairs, "number of pairs");
  synth->add_option("--seed", seed, "override data seed")->envname("PETSYNTH_SEED");

  auto* train = app.add_subcommand("train", "Train the generator/discriminator pair");
  train->add_option("--config", config_path, "JSON config file")
      ->envname("PETSYNTH_CONFIG");
  train->add_option("--data", data_dir, "directory with *_mri.vol/*_pet.vol pairs")
      ->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_option("--steps", steps, "override total training steps")
      ->envname("PETSYNTH_STEPS");
  train->add_option("--seed", seed, "override training seed")
      ->envname("PETSYNTH_SEED");
  train->add_option("--lambda-nsp", lambda_nsp, "adversarial weight");
  train->add_option("--lambda-mlm", lambda_mlm, "masked-prediction weight");
  train->add_option("--lambda-l1", lambda_l1, "L1 weight");
  train->add_flag("--use-cnn-d", use_cnn_d, "enable the auxiliary CNN discriminator");
  train->add_option("--threads", threads, "worker threads per micro-batch")
      ->envname("PETSYNTH_THREADS");

  auto* eval = app.add_subcommand("evaluate", "Metrics + histograms for a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "trainer checkpoint");
  eval->add_option("--data", data_dir, "pair directory")->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_option("--bins", bins, "histogram bins");
  eval->add_flag("--sanity-real", sanity_real,
                 "score the real PET against itself (pipeline sanity check)");

  auto* hist = app.add_subcommand("hist", "Histogram report for volume files");
  hist->add_option("--input", hist_inputs, "volume file(s)")->required();
  hist->add_option("--out", out_dir, "output directory")->required();
  hist->add_option("--bins", bins, "histogram bins");
  hist->add_option("--min", hist_lo, "range lower edge (default: data min)");
  hist->add_option("--max", hist_hi, "range upper edge (default: data max)");

  auto* dump = app.add_subcommand("dump-tokens",
                                  "Print the 1027-token sequence for a pair");
  dump->add_option("--mri", mri_path, "MRI volume file")->required();
  dump->add_option("--pet", pet_path, "PET volume file")->required();
  dump->add_option("--out", token_out, "write to file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth_data(config_path, out_dir, n_pairs, seed);
    if (train->parsed()) {
      return cmd_train(config_path, data_dir, out_dir, resume_path, steps, seed,
                       lambda_nsp, lambda_mlm, lambda_l1, use_cnn_d, threads);
    }
    if (eval->parsed()) {
      require(sanity_real || !checkpoint_path.empty(), ErrorCode::InvalidArgument,
              "evaluate needs --checkpoint (or --sanity-real)");
      return cmd_evaluate(checkpoint_path, data_dir, out_dir, bins, sanity_real);
    }
    if (hist->parsed()) return cmd_hist(hist_inputs, out_dir, bins, hist_lo, hist_hi);
    if (dump->parsed()) return cmd_dump_tokens(mri_path, pet_path, token_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
