// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "petsynth/nn.hpp"
#include "petsynth/tokenizer.hpp"

namespace petsynth {

// NSP head class indices.
inline constexpr int kNspRealClass = 0;
inline constexpr int kNspGeneratedClass = 1;

struct BertConfig {
  int layers = 4;
  int hidden = 256;
  int heads = 4;
  int ffn = 1024;
  int vocab_size = kVocabSize;
  int max_len = kSequenceLength;

  void validate() const {
    require(layers >= 1 && hidden >= 1 && heads >= 1 && ffn >= 1,
            ErrorCode::ConfigError, "bad transformer dims");
    require(hidden % heads == 0, ErrorCode::ConfigError,
            "hidden must be divisible by heads");
    require(max_len >= kSequenceLength, ErrorCode::ConfigError,
            "max_len must cover the 1027-token layout");
    require(vocab_size >= kVocabSize, ErrorCode::ConfigError,
            "vocab must cover the value band plus specials");
  }
};

// Bidirectional transformer encoder over the 1027-token sequence, with an
// NSP head (real-vs-generated, read from the BEGIN position) and an MLM head
// (original ids at masked positions). Post-layernorm residual blocks, GELU
// feedforward, learned absolute position and segment embeddings.
class Bert {
 public:
  struct LayerCache {
    nn::MatrixXd x_in;
    nn::MatrixXd qkv;
    std::vector<nn::MatrixXd> probs;  // per-head attention, n x n
    nn::MatrixXd ctx;
    nn::LayerNormCache ln1;
    nn::MatrixXd y1;
    nn::GeluCache gelu;
    nn::MatrixXd gelu_out;
    nn::LayerNormCache ln2;
  };

  struct Workspace {
    nn::MatrixXd emb;
    std::vector<LayerCache> layers;
    nn::MatrixXd hidden;
    nn::MatrixXd d_emb;  // populated by backward: gradient at the embedding sum
  };

  Bert(const BertConfig& cfg, std::uint64_t seed);

  const BertConfig& config() const { return cfg_; }
  const std::vector<nn::TensorRef>& params() const { return params_; }
  std::size_t parameter_count() const;

  const nn::MatrixXd& encode(const TokenSequence& seq, Workspace& ws) const;

  Eigen::Vector2d nsp_logits(const nn::MatrixXd& hidden) const;
  // One row of vocab logits per masked position, in plan order.
  nn::MatrixXd mlm_logits(const nn::MatrixXd& hidden, const MaskPlan& plan) const;

  // Head backwards add their contribution into d_hidden and (optionally) the
  // head parameter gradients.
  void nsp_backward(const nn::MatrixXd& hidden, const Eigen::RowVectorXd& dlogits,
                    nn::MatrixXd& d_hidden, nn::GradBuffer* g) const;
  void mlm_backward(const nn::MatrixXd& hidden, const MaskPlan& plan,
                    const nn::MatrixXd& dlogits, nn::MatrixXd& d_hidden,
                    nn::GradBuffer* g) const;

  // Propagates d_hidden through the stack and embeddings. When g is null the
  // pass still produces ws.d_emb (the straight-through route into the
  // generator) without touching parameter gradients.
  void backward(const TokenSequence& seq, Workspace& ws,
                const nn::MatrixXd& d_hidden, nn::GradBuffer* g) const;

  const nn::MatrixXd& token_embeddings() const { return tok_emb_; }

 private:
  struct Layer {
    nn::Linear qkv;
    nn::Linear proj;
    nn::LayerNorm ln1;
    nn::Linear ff1;
    nn::Linear ff2;
    nn::LayerNorm ln2;
  };

  void attention_forward(const Layer& layer, const nn::MatrixXd& x,
                         LayerCache& cache, nn::MatrixXd& out) const;

  BertConfig cfg_;
  nn::MatrixXd tok_emb_;  // vocab x hidden
  nn::MatrixXd pos_emb_;  // max_len x hidden
  nn::MatrixXd seg_emb_;  // 5 x hidden
  int tok_slot_ = -1, pos_slot_ = -1, seg_slot_ = -1;
  std::vector<Layer> layers_;
  nn::Linear nsp_;
  nn::Linear mlm_;
  std::vector<nn::TensorRef> params_;
};

}  // namespace petsynth
