// SPDX-License-Identifier: Apache-2.0
#include "petsynth/cnn_discriminator.hpp"

namespace petsynth {

using nn::GradBuffer;
using nn::Tensor4;

namespace {
constexpr double kLeakySlope = 0.2;
constexpr double kInitStddev = 0.02;
}  // namespace

CnnDiscriminator::CnnDiscriminator(int time_steps, std::uint64_t seed) {
  Rng rng(seed, Stream::InitCnnD);
  nn::ParamCollector pc;
  const int widths[kLayers + 1] = {time_steps, 8, 16, 32, 64, 2};
  for (int i = 0; i < kLayers; ++i) {
    const bool strided = i < 3;
    conv_[i].init(rng, widths[i], widths[i + 1], strided ? 4 : 3,
                  strided ? 2 : 1, 1, kInitStddev);
    conv_[i].reg(pc, "cnnd.conv" + std::to_string(i));
    if (i >= 1 && i <= 3) {
      norm_[i].init(widths[i + 1]);
      norm_[i].reg(pc, "cnnd.norm" + std::to_string(i));
    }
  }
  params_ = pc.take();
}

Eigen::Vector2d CnnDiscriminator::forward(const Tensor4& pet, Workspace& ws) const {
  ws.input = pet;
  ws.conv_out.resize(kLayers);
  ws.norm_out.resize(kLayers);
  ws.act.resize(kLayers);
  ws.norm_cache.resize(kLayers);

  const Tensor4* x = &ws.input;
  for (int i = 0; i < kLayers - 1; ++i) {
    conv_[i].forward(*x, ws.conv_out[i]);
    if (i >= 1 && i <= 3) {
      norm_[i].forward(ws.conv_out[i], ws.norm_out[i], ws.norm_cache[i]);
      leaky_relu_forward(ws.norm_out[i], ws.act[i], kLeakySlope);
    } else {
      leaky_relu_forward(ws.conv_out[i], ws.act[i], kLeakySlope);
    }
    x = &ws.act[i];
  }
  conv_[kLayers - 1].forward(*x, ws.patch_logits);

  const std::size_t n = ws.patch_logits.spatial();
  ws.logits.setZero();
  for (int c = 0; c < 2; ++c) {
    const double* src = ws.patch_logits.channel(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += src[i];
    ws.logits(c) = sum / static_cast<double>(n);
  }
  return ws.logits;
}

void CnnDiscriminator::backward(const Workspace& ws,
                                const Eigen::RowVectorXd& dlogits,
                                Tensor4* d_input, GradBuffer* g) const {
  const std::size_t n = ws.patch_logits.spatial();
  Tensor4 d_patch;
  d_patch.resize(2, ws.patch_logits.d, ws.patch_logits.h, ws.patch_logits.w);
  for (int c = 0; c < 2; ++c) {
    const double dv = dlogits(c) / static_cast<double>(n);
    double* dst = d_patch.channel(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = dv;
  }

  Tensor4 d_cur, d_pre, d_norm;
  conv_[kLayers - 1].backward(ws.act[kLayers - 2], d_patch, &d_cur, g);
  for (int i = kLayers - 2; i >= 0; --i) {
    const bool want_dx = (i > 0) || (d_input != nullptr);
    if (i >= 1 && i <= 3) {
      leaky_relu_backward(ws.norm_out[i], d_cur, d_pre, kLeakySlope);
      norm_[i].backward(d_pre, ws.norm_cache[i], d_norm, g);
      conv_[i].backward(i > 0 ? ws.act[i - 1] : ws.input, d_norm,
                        want_dx ? &d_cur : nullptr, g);
    } else {
      leaky_relu_backward(ws.conv_out[i], d_cur, d_pre, kLeakySlope);
      conv_[i].backward(i > 0 ? ws.act[i - 1] : ws.input, d_pre,
                        want_dx ? &d_cur : nullptr, g);
    }
  }
  if (d_input != nullptr) *d_input = std::move(d_cur);
}

}  // namespace petsynth
