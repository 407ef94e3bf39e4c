// SPDX-License-Identifier: Apache-2.0
#pragma once

// Internal-only JSON plumbing; keeps the vendored header out of the public
// include surface.

#include <json.hpp>

#include "petsynth/bert.hpp"
#include "petsynth/generator.hpp"
#include "petsynth/training.hpp"
#include "petsynth/volume.hpp"

namespace petsynth::detail {

using nlohmann::json;

json to_json(const DataConfig& c);
DataConfig data_config_from_json(const json& j);

json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const json& j);

json to_json(const BertConfig& c);
BertConfig bert_config_from_json(const json& j);

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);

json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const json& j);

}  // namespace petsynth::detail
