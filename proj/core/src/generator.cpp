// SPDX-License-Identifier: Apache-2.0
#include "petsynth/generator.hpp"

#include <algorithm>
#include <cmath>

namespace petsynth {

using nn::GradBuffer;
using nn::Tensor4;

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kInitStddev = 0.02;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Nearest power of two by linear distance, ties toward the larger grid (the
// final resample then shrinks, which keeps detail), never below 8.
int nearest_pow2(int n) {
  if (n <= 8) return 8;
  int lo = 8;
  while (lo * 2 <= n) lo *= 2;
  const int hi = lo * 2;
  return (n - lo < hi - n) ? lo : hi;
}

void apply_output_activation(const Tensor4& x, Tensor4& y, OutputActivation act) {
  y.resize(x.c, x.d, x.h, x.w);
  if (act == OutputActivation::Tanhshrink) {
    for (std::size_t i = 0; i < x.total(); ++i) y.v[i] = nn::tanhshrink(x.v[i]);
  } else {
    for (std::size_t i = 0; i < x.total(); ++i) y.v[i] = std::tanh(x.v[i]);
  }
}

void output_activation_backward(const Tensor4& x, const Tensor4& dy, Tensor4& dx,
                                OutputActivation act) {
  dx.resize(x.c, x.d, x.h, x.w);
  if (act == OutputActivation::Tanhshrink) {
    for (std::size_t i = 0; i < x.total(); ++i) {
      dx.v[i] = dy.v[i] * nn::tanhshrink_grad(x.v[i]);
    }
  } else {
    for (std::size_t i = 0; i < x.total(); ++i) {
      const double t = std::tanh(x.v[i]);
      dx.v[i] = dy.v[i] * (1.0 - t * t);
    }
  }
}

void relu_forward(const Tensor4& x, Tensor4& y) {
  y.resize(x.c, x.d, x.h, x.w);
  for (std::size_t i = 0; i < x.total(); ++i) y.v[i] = std::max(x.v[i], 0.0);
}

void relu_backward(const Tensor4& x, const Tensor4& dy, Tensor4& dx) {
  dx.resize(x.c, x.d, x.h, x.w);
  for (std::size_t i = 0; i < x.total(); ++i) {
    dx.v[i] = x.v[i] > 0.0 ? dy.v[i] : 0.0;
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  require(input_dims[0] == input_dims[1] && input_dims[1] == input_dims[2],
          ErrorCode::ConfigError, "generator input must be cubic");
  require(is_pow2(input_dims[0]), ErrorCode::ConfigError,
          "generator input side must be a power of two");
  require(depth >= 1, ErrorCode::ConfigError, "generator depth must be >= 1");
  require(input_dims[0] >> depth == kGridSide, ErrorCode::ConfigError,
          "encoder must reduce the input to an 8^3 bottleneck");
  require(output_dims[0] >= 1, ErrorCode::ConfigError,
          "output needs at least one time-step");
  for (int i = 1; i < 4; ++i) {
    require(output_dims[i] >= 8, ErrorCode::ConfigError,
            "output spatial dims must be >= 8");
  }
  require(base_channels >= 1 && max_channels >= base_channels,
          ErrorCode::ConfigError, "bad channel plan");
  require(target_grid() * 2 <= input_dims[0], ErrorCode::ConfigError,
          "decoder grid must leave room for skip connections");
}

int GeneratorConfig::target_grid() const {
  int g = 8;
  for (int i = 1; i < 4; ++i) g = std::max(g, nearest_pow2(output_dims[i]));
  return g;
}

int GeneratorConfig::decoder_levels() const {
  int g = target_grid(), levels = 0;
  while (g > kGridSide) {
    g /= 2;
    ++levels;
  }
  return levels;
}

std::vector<double> bottleneck_fusion(std::span<const double> bottleneck,
                                      std::span<const double> mri_summary) {
  require(bottleneck.size() == mri_summary.size(), ErrorCode::DimMismatch,
          "fusion operands must have equal length");
  std::vector<double> out(bottleneck.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * (bottleneck[i] + mri_summary[i]);
  }
  return out;
}

int Generator::enc_channels(int level) const {
  return std::min(cfg_.base_channels << level, cfg_.max_channels);
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed, Stream::InitGenerator);
  nn::ParamCollector pc;

  enc_.resize(cfg_.depth);
  enc_norm_.resize(cfg_.depth);
  int in_ch = 1;
  for (int i = 0; i < cfg_.depth; ++i) {
    const int out_ch = enc_channels(i);
    enc_[i].init(rng, in_ch, out_ch, 4, 2, 1, kInitStddev);
    enc_[i].reg(pc, "gen.enc" + std::to_string(i) + ".conv");
    if (i > 0) {
      enc_norm_[i].init(out_ch);
      enc_norm_[i].reg(pc, "gen.enc" + std::to_string(i) + ".norm");
    }
    in_ch = out_ch;
  }

  const int levels = cfg_.decoder_levels();
  dec_.resize(levels);
  dec_norm_.resize(levels);
  int cur = enc_channels(cfg_.depth - 1);
  for (int s = 0; s < levels; ++s) {
    const int skip_level = cfg_.depth - 2 - s;
    const int skip_ch = enc_channels(skip_level);
    dec_[s].init(rng, cur + skip_ch, skip_ch, 3, 1, 1, kInitStddev);
    dec_[s].reg(pc, "gen.dec" + std::to_string(s) + ".conv");
    dec_norm_[s].init(skip_ch);
    dec_norm_[s].reg(pc, "gen.dec" + std::to_string(s) + ".norm");
    cur = skip_ch;
  }

  head_.init(rng, cur, cfg_.output_dims[0], 3, 1, 1, kInitStddev);
  head_.reg(pc, "gen.head.conv");

  params_ = pc.take();
}

std::size_t Generator::parameter_count() const {
  std::size_t n = 0;
  for (const auto& r : params_) n += r.size;
  return n;
}

const Tensor4& Generator::forward(std::span<const double> mri, Workspace& ws,
                                  const ForwardOptions& opts) const {
  const int side = cfg_.input_dims[0];
  require(mri.size() == static_cast<std::size_t>(side) * side * side,
          ErrorCode::DimMismatch, "generator input dims mismatch");

  ws.input.resize(1, side, side, side);
  std::copy(mri.begin(), mri.end(), ws.input.v.begin());

  const int depth = cfg_.depth;
  ws.enc_conv_out.resize(depth);
  ws.enc_norm_out.resize(depth);
  ws.enc_act.resize(depth);
  ws.enc_norm_cache.resize(depth);

  const Tensor4* x = &ws.input;
  for (int i = 0; i < depth; ++i) {
    enc_[i].forward(*x, ws.enc_conv_out[i]);
    if (i > 0) {
      enc_norm_[i].forward(ws.enc_conv_out[i], ws.enc_norm_out[i],
                           ws.enc_norm_cache[i]);
      leaky_relu_forward(ws.enc_norm_out[i], ws.enc_act[i], kLeakySlope);
    } else {
      leaky_relu_forward(ws.enc_conv_out[i], ws.enc_act[i], kLeakySlope);
    }
    x = &ws.enc_act[i];
  }

  // Bottleneck fusion: the 8^3 abs-max summary of the input is averaged into
  // every bottleneck channel.
  const auto summary = summarize_raw(mri, {1, side, side, side}, Modality::MRI);
  const Tensor4& bott = ws.enc_act[depth - 1];
  ws.fused.resize(bott.c, bott.d, bott.h, bott.w);
  for (int c = 0; c < bott.c; ++c) {
    const double* src = bott.channel(c);
    double* dst = ws.fused.channel(c);
    for (int i = 0; i < kSummaryLength; ++i) {
      dst[i] = 0.5 * (src[i] + summary.summary.values[i]);
    }
  }

  const int levels = cfg_.decoder_levels();
  ws.dec_up_out.resize(levels);
  ws.dec_concat.resize(levels);
  ws.dec_conv_out.resize(levels);
  ws.dec_norm_out.resize(levels);
  ws.dec_act.resize(levels);
  ws.dec_norm_cache.resize(levels);

  const Tensor4* cur = &ws.fused;
  for (int s = 0; s < levels; ++s) {
    upsample2_forward(*cur, ws.dec_up_out[s]);
    const Tensor4& up = ws.dec_up_out[s];
    const Tensor4& skip = ws.enc_act[depth - 2 - s];
    require(skip.d == up.d && skip.h == up.h && skip.w == up.w,
            ErrorCode::DimMismatch, "skip grid mismatch");
    Tensor4& cat = ws.dec_concat[s];
    cat.resize(up.c + skip.c, up.d, up.h, up.w);
    std::copy(up.v.begin(), up.v.end(), cat.v.begin());
    if (opts.zero_skips) {
      std::fill(cat.v.begin() + up.total(), cat.v.end(), 0.0);
    } else {
      std::copy(skip.v.begin(), skip.v.end(), cat.v.begin() + up.total());
    }
    dec_[s].forward(cat, ws.dec_conv_out[s]);
    dec_norm_[s].forward(ws.dec_conv_out[s], ws.dec_norm_out[s],
                         ws.dec_norm_cache[s]);
    relu_forward(ws.dec_norm_out[s], ws.dec_act[s]);
    cur = &ws.dec_act[s];
  }

  head_.forward(*cur, ws.head_out);
  apply_output_activation(ws.head_out, ws.act_out, cfg_.output_activation);
  resize_trilinear_forward(ws.act_out, ws.output, cfg_.output_dims[1],
                           cfg_.output_dims[2], cfg_.output_dims[3]);
  return ws.output;
}

void Generator::backward(const Workspace& ws, const Tensor4& d_output,
                         GradBuffer* g) const {
  Tensor4 d_act, d_head_out, d_cur;
  resize_trilinear_backward(d_output, d_act, ws.act_out.d, ws.act_out.h,
                            ws.act_out.w);
  output_activation_backward(ws.head_out, d_act, d_head_out,
                             cfg_.output_activation);

  const int levels = cfg_.decoder_levels();
  const int depth = cfg_.depth;
  const Tensor4& head_in = levels > 0 ? ws.dec_act[levels - 1] : ws.fused;
  head_.backward(head_in, d_head_out, &d_cur, g);

  // Skip gradients picked up while walking the decoder, consumed later by the
  // encoder walk.
  std::vector<Tensor4> skip_grads(depth);
  Tensor4 d_norm, d_conv, d_cat, d_up;
  for (int s = levels - 1; s >= 0; --s) {
    relu_backward(ws.dec_norm_out[s], d_cur, d_norm);
    dec_norm_[s].backward(d_norm, ws.dec_norm_cache[s], d_conv, g);
    dec_[s].backward(ws.dec_concat[s], d_conv, &d_cat, g);

    const Tensor4& up = ws.dec_up_out[s];
    const int skip_level = depth - 2 - s;
    const Tensor4& skip = ws.enc_act[skip_level];
    Tensor4& sg = skip_grads[skip_level];
    sg.resize(skip.c, skip.d, skip.h, skip.w);
    std::copy(d_cat.v.begin() + up.total(), d_cat.v.end(), sg.v.begin());

    Tensor4 d_up_out;
    d_up_out.resize(up.c, up.d, up.h, up.w);
    std::copy(d_cat.v.begin(), d_cat.v.begin() + up.total(), d_up_out.v.begin());
    upsample2_backward(d_up_out, d_up, up.d / 2, up.h / 2, up.w / 2);
    d_cur = std::move(d_up);
  }

  // Through the fusion: each bottleneck channel contributed with weight 1/2.
  // (The summary side feeds the frozen input, so its gradient is dropped.)
  for (double& v : d_cur.v) v *= 0.5;

  for (int i = depth - 1; i >= 0; --i) {
    if (skip_grads[i].total() == ws.enc_act[i].total() && i != depth - 1) {
      for (std::size_t j = 0; j < d_cur.v.size(); ++j) {
        d_cur.v[j] += skip_grads[i].v[j];
      }
    }
    Tensor4 d_pre;
    if (i > 0) {
      leaky_relu_backward(ws.enc_norm_out[i], d_cur, d_pre, kLeakySlope);
      enc_norm_[i].backward(d_pre, ws.enc_norm_cache[i], d_norm, g);
      const Tensor4& conv_in = ws.enc_act[i - 1];
      enc_[i].backward(conv_in, d_norm, &d_cur, g);
    } else {
      leaky_relu_backward(ws.enc_conv_out[i], d_cur, d_pre, kLeakySlope);
      enc_[i].backward(ws.input, d_pre, nullptr, g);
    }
  }
}

Volume Generator::forward_volume(const Volume& normalized_mri) const {
  require(normalized_mri.modality() == Modality::MRI, ErrorCode::ModalityMismatch,
          "generator takes an MRI volume");
  require(normalized_mri.d() == cfg_.input_dims[0] &&
              normalized_mri.h() == cfg_.input_dims[1] &&
              normalized_mri.w() == cfg_.input_dims[2],
          ErrorCode::DimMismatch, "MRI dims do not match generator config");
  std::vector<double> buf(normalized_mri.values().begin(),
                          normalized_mri.values().end());
  Workspace ws;
  const Tensor4& out = forward(buf, ws);
  std::vector<float> values(out.v.size());
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    values[i] = static_cast<float>(out.v[i]);
  }
  return Volume::from_buffer(Modality::PET, 4, cfg_.output_dims,
                             std::move(values));
}

}  // namespace petsynth
