// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "petsynth/bert.hpp"
#include "petsynth/generator.hpp"
#include "petsynth/training.hpp"
#include "petsynth/volume.hpp"

namespace petsynth {

// Knobs for the generator that are not implied by the data dims; depth is
// always derived from the MRI side (it must reduce to the 8^3 bottleneck).
struct GeneratorSettings {
  int base_channels = 8;
  int max_channels = 64;
  OutputActivation output_activation = OutputActivation::Tanhshrink;
};

// Whole-run configuration, parsed from one JSON file with per-section
// defaults. Unknown keys are rejected so typos fail fast.
struct AppConfig {
  DataConfig data;
  GeneratorSettings generator;
  BertConfig bert;
  TrainConfig train;
  LossWeights weights;

  GeneratorConfig generator_config() const;
};

AppConfig parse_config_text(const std::string& json_text);
AppConfig load_config(const std::string& path);

// Round-trippable snapshot (manifests, checkpoints).
std::string config_to_json(const AppConfig& cfg);

}  // namespace petsynth
