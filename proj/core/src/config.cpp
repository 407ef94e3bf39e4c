// SPDX-License-Identifier: Apache-2.0
#include "petsynth/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json_util.hpp"

namespace petsynth {

namespace detail {

json to_json(const DataConfig& c) {
  return json{{"mri_dims", c.mri_dims},
              {"pet_dims", c.pet_dims},
              {"seed", c.seed},
              {"mri_range", {c.mri_min, c.mri_max}},
              {"pet_range", {c.pet_min, c.pet_max}}};
}

DataConfig data_config_from_json(const json& j) {
  DataConfig c;
  if (j.contains("mri_dims")) c.mri_dims = j.at("mri_dims").get<std::array<int, 3>>();
  if (j.contains("pet_dims")) c.pet_dims = j.at("pet_dims").get<std::array<int, 4>>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("mri_range")) {
    auto r = j.at("mri_range").get<std::array<double, 2>>();
    c.mri_min = r[0];
    c.mri_max = r[1];
  }
  if (j.contains("pet_range")) {
    auto r = j.at("pet_range").get<std::array<double, 2>>();
    c.pet_min = r[0];
    c.pet_max = r[1];
  }
  return c;
}

json to_json(const GeneratorConfig& c) {
  return json{{"input_dims", c.input_dims},
              {"output_dims", c.output_dims},
              {"depth", c.depth},
              {"base_channels", c.base_channels},
              {"max_channels", c.max_channels},
              {"output_activation",
               c.output_activation == OutputActivation::Tanhshrink ? "tanhshrink"
                                                                   : "tanh"}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.input_dims = j.at("input_dims").get<std::array<int, 3>>();
  c.output_dims = j.at("output_dims").get<std::array<int, 4>>();
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.max_channels = j.at("max_channels").get<int>();
  const std::string act = j.at("output_activation").get<std::string>();
  require(act == "tanhshrink" || act == "tanh", ErrorCode::ConfigError,
          "output_activation must be tanhshrink or tanh");
  c.output_activation =
      act == "tanhshrink" ? OutputActivation::Tanhshrink : OutputActivation::Tanh;
  return c;
}

json to_json(const BertConfig& c) {
  return json{{"layers", c.layers},
              {"hidden", c.hidden},
              {"heads", c.heads},
              {"ffn", c.ffn},
              {"vocab_size", c.vocab_size},
              {"max_len", c.max_len}};
}

BertConfig bert_config_from_json(const json& j) {
  BertConfig c;
  if (j.contains("layers")) c.layers = j.at("layers").get<int>();
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
  if (j.contains("heads")) c.heads = j.at("heads").get<int>();
  if (j.contains("ffn")) c.ffn = j.at("ffn").get<int>();
  if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<int>();
  if (j.contains("max_len")) c.max_len = j.at("max_len").get<int>();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"micro_batch", c.micro_batch},
              {"accumulation_steps", c.accumulation_steps},
              {"base_lr", c.base_lr},
              {"warmup_fraction", c.warmup_fraction},
              {"total_steps", c.total_steps},
              {"seed", c.seed},
              {"use_cnn_d", c.use_cnn_d},
              {"checkpoint_every", c.checkpoint_every},
              {"threads", c.threads},
              {"l1_on_restored", c.l1_on_restored}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (j.contains("micro_batch")) c.micro_batch = j.at("micro_batch").get<int>();
  if (j.contains("accumulation_steps")) {
    c.accumulation_steps = j.at("accumulation_steps").get<int>();
  }
  if (j.contains("base_lr")) c.base_lr = j.at("base_lr").get<double>();
  if (j.contains("warmup_fraction")) {
    c.warmup_fraction = j.at("warmup_fraction").get<double>();
  }
  if (j.contains("total_steps")) c.total_steps = j.at("total_steps").get<long>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("use_cnn_d")) c.use_cnn_d = j.at("use_cnn_d").get<bool>();
  if (j.contains("checkpoint_every")) {
    c.checkpoint_every = j.at("checkpoint_every").get<long>();
  }
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  if (j.contains("l1_on_restored")) {
    c.l1_on_restored = j.at("l1_on_restored").get<bool>();
  }
  return c;
}

json to_json(const LossWeights& w) {
  return json{{"lambda_nsp", w.nsp}, {"lambda_mlm", w.mlm}, {"lambda_l1", w.l1}};
}

LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  if (j.contains("lambda_nsp")) w.nsp = j.at("lambda_nsp").get<double>();
  if (j.contains("lambda_mlm")) w.mlm = j.at("lambda_mlm").get<double>();
  if (j.contains("lambda_l1")) w.l1 = j.at("lambda_l1").get<double>();
  return w;
}

}  // namespace detail

namespace {

using detail::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(known.count(it.key()) > 0, ErrorCode::ConfigError,
            "unknown config key \"" + it.key() + "\" in " + section);
  }
}

}  // namespace

GeneratorConfig AppConfig::generator_config() const {
  GeneratorConfig g;
  g.input_dims = data.mri_dims;
  g.output_dims = data.pet_dims;
  int side = data.mri_dims[0];
  int depth = 0;
  while (side > kGridSide) {
    side /= 2;
    ++depth;
  }
  g.depth = depth;
  g.base_channels = generator.base_channels;
  g.max_channels = generator.max_channels;
  g.output_activation = generator.output_activation;
  g.validate();
  return g;
}

AppConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(j, {"data", "generator", "bert", "train", "weights"},
                      "top level");
  AppConfig cfg;
  if (j.contains("data")) {
    reject_unknown_keys(j.at("data"),
                        {"mri_dims", "pet_dims", "seed", "mri_range", "pet_range"},
                        "data");
    cfg.data = detail::data_config_from_json(j.at("data"));
  }
  if (j.contains("generator")) {
    const json& g = j.at("generator");
    reject_unknown_keys(g, {"base_channels", "max_channels", "output_activation"},
                        "generator");
    if (g.contains("base_channels")) {
      cfg.generator.base_channels = g.at("base_channels").get<int>();
    }
    if (g.contains("max_channels")) {
      cfg.generator.max_channels = g.at("max_channels").get<int>();
    }
    if (g.contains("output_activation")) {
      const std::string act = g.at("output_activation").get<std::string>();
      require(act == "tanhshrink" || act == "tanh", ErrorCode::ConfigError,
              "output_activation must be tanhshrink or tanh");
      cfg.generator.output_activation = act == "tanhshrink"
                                            ? OutputActivation::Tanhshrink
                                            : OutputActivation::Tanh;
    }
  }
  if (j.contains("bert")) {
    reject_unknown_keys(j.at("bert"),
                        {"layers", "hidden", "heads", "ffn", "vocab_size", "max_len"},
                        "bert");
    cfg.bert = detail::bert_config_from_json(j.at("bert"));
  }
  if (j.contains("train")) {
    reject_unknown_keys(j.at("train"),
                        {"micro_batch", "accumulation_steps", "base_lr",
                         "warmup_fraction", "total_steps", "seed", "use_cnn_d",
                         "checkpoint_every", "threads", "l1_on_restored"},
                        "train");
    cfg.train = detail::train_config_from_json(j.at("train"));
  }
  if (j.contains("weights")) {
    reject_unknown_keys(j.at("weights"), {"lambda_nsp", "lambda_mlm", "lambda_l1"},
                        "weights");
    cfg.weights = detail::loss_weights_from_json(j.at("weights"));
  }
  cfg.data.validate();
  cfg.bert.validate();
  cfg.train.validate();
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::ConfigError, "cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_json(const AppConfig& cfg) {
  json j;
  j["data"] = detail::to_json(cfg.data);
  j["generator"] = {
      {"base_channels", cfg.generator.base_channels},
      {"max_channels", cfg.generator.max_channels},
      {"output_activation",
       cfg.generator.output_activation == OutputActivation::Tanhshrink
           ? "tanhshrink"
           : "tanh"}};
  j["bert"] = detail::to_json(cfg.bert);
  j["train"] = detail::to_json(cfg.train);
  j["weights"] = detail::to_json(cfg.weights);
  return j.dump(2);
}

}  // namespace petsynth
