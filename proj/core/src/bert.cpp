// SPDX-License-Identifier: Apache-2.0
#include "petsynth/bert.hpp"

#include <cmath>

namespace petsynth {

using nn::GradBuffer;
using nn::MatrixXd;

namespace {
constexpr double kInitStddev = 0.02;
}

Bert::Bert(const BertConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed, Stream::InitBert);
  nn::ParamCollector pc;

  auto init_emb = [&](MatrixXd& m, int rows, int cols) {
    m.resize(rows, cols);
    for (long j = 0; j < m.cols(); ++j) {
      for (long i = 0; i < m.rows(); ++i) m(i, j) = rng.normal(0.0, kInitStddev);
    }
  };
  init_emb(tok_emb_, cfg_.vocab_size, cfg_.hidden);
  init_emb(pos_emb_, cfg_.max_len, cfg_.hidden);
  init_emb(seg_emb_, kSegmentCount, cfg_.hidden);

  // Value-band tokens start on a smooth multi-scale curve of their numeric
  // value (plus the noise above). The table stays fully learned; this only
  // makes neighboring ids similar from step 0, which the straight-through
  // path and masked-value generalization both rely on.
  {
    const int n_freq = cfg_.hidden / 2;
    for (int id = kValueIdMin; id <= kValueIdMax; ++id) {
      const double v = static_cast<double>(id) / 1000.0;
      for (int j = 0; j < cfg_.hidden; ++j) {
        const int k = j / 2;
        const double wavelength =
            2.0 * std::pow(10.0, n_freq > 1 ? static_cast<double>(k) / (n_freq - 1) : 0.0);
        const double phase = 2.0 * M_PI * v / wavelength;
        tok_emb_(id, j) += kInitStddev * ((j % 2 == 0) ? std::sin(phase) : std::cos(phase));
      }
    }
  }
  tok_slot_ = pc.add("bert.tok_emb", tok_emb_);
  pos_slot_ = pc.add("bert.pos_emb", pos_emb_);
  seg_slot_ = pc.add("bert.seg_emb", seg_emb_);

  layers_.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    auto& layer = layers_[l];
    const std::string p = "bert.layer" + std::to_string(l);
    layer.qkv.init(rng, cfg_.hidden, 3 * cfg_.hidden, kInitStddev);
    layer.qkv.reg(pc, p + ".qkv");
    layer.proj.init(rng, cfg_.hidden, cfg_.hidden, kInitStddev);
    layer.proj.reg(pc, p + ".proj");
    layer.ln1.init(cfg_.hidden);
    layer.ln1.reg(pc, p + ".ln1");
    layer.ff1.init(rng, cfg_.hidden, cfg_.ffn, kInitStddev);
    layer.ff1.reg(pc, p + ".ff1");
    layer.ff2.init(rng, cfg_.ffn, cfg_.hidden, kInitStddev);
    layer.ff2.reg(pc, p + ".ff2");
    layer.ln2.init(cfg_.hidden);
    layer.ln2.reg(pc, p + ".ln2");
  }

  nsp_.init(rng, cfg_.hidden, 2, kInitStddev);
  nsp_.reg(pc, "bert.nsp");
  mlm_.init(rng, cfg_.hidden, cfg_.vocab_size, kInitStddev);
  mlm_.reg(pc, "bert.mlm");

  params_ = pc.take();
}

std::size_t Bert::parameter_count() const {
  std::size_t n = 0;
  for (const auto& r : params_) n += r.size;
  return n;
}

void Bert::attention_forward(const Layer& layer, const MatrixXd& x,
                             LayerCache& cache, MatrixXd& out) const {
  const long n = x.rows();
  const int h = cfg_.hidden;
  const int heads = cfg_.heads;
  const int dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  layer.qkv.forward(x, cache.qkv);
  cache.ctx.resize(n, h);
  cache.probs.resize(heads);
  for (int a = 0; a < heads; ++a) {
    const auto q = cache.qkv.middleCols(a * dh, dh);
    const auto k = cache.qkv.middleCols(h + a * dh, dh);
    const auto v = cache.qkv.middleCols(2 * h + a * dh, dh);
    MatrixXd& p = cache.probs[a];
    p.noalias() = q * k.transpose();
    p *= scale;
    nn::softmax_rows(p);
    cache.ctx.middleCols(a * dh, dh).noalias() = p * v;
  }
  layer.proj.forward(cache.ctx, out);
}

const MatrixXd& Bert::encode(const TokenSequence& seq, Workspace& ws) const {
  const int n = kSequenceLength;
  ws.emb.resize(n, cfg_.hidden);
  for (int i = 0; i < n; ++i) {
    const int id = seq.ids[i];
    require(id >= 0 && id < cfg_.vocab_size, ErrorCode::BadToken,
            "token id outside vocabulary");
    ws.emb.row(i) = tok_emb_.row(id) + pos_emb_.row(i) +
                    seg_emb_.row(static_cast<int>(seq.segments[i]));
  }

  ws.layers.resize(cfg_.layers);
  MatrixXd attn, resid, ffn_out;
  const MatrixXd* x = &ws.emb;
  for (int l = 0; l < cfg_.layers; ++l) {
    auto& cache = ws.layers[l];
    if (&cache.x_in != x) cache.x_in = *x;
    attention_forward(layers_[l], cache.x_in, cache, attn);
    resid = cache.x_in + attn;
    layers_[l].ln1.forward(resid, cache.y1, cache.ln1);

    MatrixXd pre;
    layers_[l].ff1.forward(cache.y1, pre);
    nn::gelu_forward(pre, cache.gelu_out, cache.gelu);
    layers_[l].ff2.forward(cache.gelu_out, ffn_out);
    resid = cache.y1 + ffn_out;
    MatrixXd& out = (l + 1 < cfg_.layers) ? ws.layers[l + 1].x_in : ws.hidden;
    layers_[l].ln2.forward(resid, out, cache.ln2);
    x = &out;
  }
  return ws.hidden;
}

Eigen::Vector2d Bert::nsp_logits(const MatrixXd& hidden) const {
  Eigen::RowVectorXd h0 = hidden.row(0);
  Eigen::RowVectorXd logits = h0 * nsp_.w + nsp_.b;
  return Eigen::Vector2d(logits(0), logits(1));
}

MatrixXd Bert::mlm_logits(const MatrixXd& hidden, const MaskPlan& plan) const {
  require(!plan.masked_positions.empty(), ErrorCode::EmptyMaskPlan,
          "mlm_logits with empty mask plan");
  const long m = static_cast<long>(plan.masked_positions.size());
  MatrixXd rows(m, cfg_.hidden);
  for (long i = 0; i < m; ++i) {
    rows.row(i) = hidden.row(plan.masked_positions[i]);
  }
  MatrixXd logits;
  mlm_.forward(rows, logits);
  return logits;
}

void Bert::nsp_backward(const MatrixXd& hidden, const Eigen::RowVectorXd& dlogits,
                        MatrixXd& d_hidden, GradBuffer* g) const {
  d_hidden.row(0) += dlogits * nsp_.w.transpose();
  if (g != nullptr) {
    g->mat(nsp_.wi, nsp_.w.rows(), nsp_.w.cols()).noalias() +=
        hidden.row(0).transpose() * dlogits;
    g->row(nsp_.bi) += dlogits;
  }
}

void Bert::mlm_backward(const MatrixXd& hidden, const MaskPlan& plan,
                        const MatrixXd& dlogits, MatrixXd& d_hidden,
                        GradBuffer* g) const {
  const long m = static_cast<long>(plan.masked_positions.size());
  MatrixXd d_rows;
  d_rows.noalias() = dlogits * mlm_.w.transpose();
  for (long i = 0; i < m; ++i) {
    d_hidden.row(plan.masked_positions[i]) += d_rows.row(i);
  }
  if (g != nullptr) {
    MatrixXd rows(m, cfg_.hidden);
    for (long i = 0; i < m; ++i) {
      rows.row(i) = hidden.row(plan.masked_positions[i]);
    }
    g->mat(mlm_.wi, mlm_.w.rows(), mlm_.w.cols()).noalias() +=
        rows.transpose() * dlogits;
    g->row(mlm_.bi) += dlogits.colwise().sum();
  }
}

void Bert::backward(const TokenSequence& seq, Workspace& ws,
                    const MatrixXd& d_hidden, GradBuffer* g) const {
  const long n = kSequenceLength;
  const int h = cfg_.hidden;
  const int heads = cfg_.heads;
  const int dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixXd dy = d_hidden;
  MatrixXd d_resid, d_y1, d_gelu_out, d_pre, d_ff_in, d_attn, d_ctx, dqkv, d_x;
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const auto& layer = layers_[l];
    auto& cache = ws.layers[l];

    layer.ln2.backward(dy, cache.ln2, d_resid, g);
    // resid2 = y1 + ffn_out
    layer.ff2.backward(cache.gelu_out, d_resid, d_gelu_out, g);
    nn::gelu_backward(d_gelu_out, cache.gelu, d_pre);
    layer.ff1.backward(cache.y1, d_pre, d_ff_in, g);
    d_y1 = d_resid + d_ff_in;

    layer.ln1.backward(d_y1, cache.ln1, d_resid, g);
    // resid1 = x_in + attn_proj
    layer.proj.backward(cache.ctx, d_resid, d_ctx, g);

    dqkv.resize(n, 3 * h);
    MatrixXd dp, ds;
    for (int a = 0; a < heads; ++a) {
      const auto q = cache.qkv.middleCols(a * dh, dh);
      const auto k = cache.qkv.middleCols(h + a * dh, dh);
      const auto v = cache.qkv.middleCols(2 * h + a * dh, dh);
      const MatrixXd& p = cache.probs[a];
      const auto d_ctx_h = d_ctx.middleCols(a * dh, dh);

      dp.noalias() = d_ctx_h * v.transpose();
      dqkv.middleCols(2 * h + a * dh, dh).noalias() = p.transpose() * d_ctx_h;

      // softmax backward per row
      ds = dp.cwiseProduct(p);
      Eigen::VectorXd row_sums = ds.rowwise().sum();
      ds.noalias() -= row_sums.asDiagonal() * p;
      ds *= scale;

      dqkv.middleCols(a * dh, dh).noalias() = ds * k;
      dqkv.middleCols(h + a * dh, dh).noalias() = ds.transpose() * q;
    }
    layer.qkv.backward(cache.x_in, dqkv, d_x, g);
    dy = d_resid + d_x;
  }

  ws.d_emb = dy;
  if (g != nullptr) {
    auto tok = g->mat(tok_slot_, tok_emb_.rows(), tok_emb_.cols());
    auto pos = g->mat(pos_slot_, pos_emb_.rows(), pos_emb_.cols());
    auto seg = g->mat(seg_slot_, seg_emb_.rows(), seg_emb_.cols());
    for (long i = 0; i < n; ++i) {
      tok.row(seq.ids[i]) += dy.row(i);
      pos.row(i) += dy.row(i);
      seg.row(static_cast<int>(seq.segments[i])) += dy.row(i);
    }
  }
}

}  // namespace petsynth
