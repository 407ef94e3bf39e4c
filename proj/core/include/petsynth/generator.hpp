// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "petsynth/conv3d.hpp"
#include "petsynth/nn.hpp"
#include "petsynth/tokenizer.hpp"
#include "petsynth/volume.hpp"

namespace petsynth {

enum class OutputActivation { Tanhshrink, Tanh };

// Encoder-decoder over cubic MRI grids. `depth` stride-2 encoder levels take
// the input down to an 8^3 bottleneck (512 voxels per channel, matching the
// summary length); the decoder climbs back to the power-of-two grid nearest
// the requested PET dims and a trilinear resample finishes the job.
struct GeneratorConfig {
  std::array<int, 3> input_dims{64, 64, 64};
  std::array<int, 4> output_dims{2, 24, 19, 19};
  int depth = 3;
  int base_channels = 8;
  int max_channels = 64;
  OutputActivation output_activation = OutputActivation::Tanhshrink;

  void validate() const;
  int target_grid() const;     // decoder grid before the final resize
  int decoder_levels() const;  // log2(target_grid / 8)
};

// Elementwise (b + s) / 2; the bottleneck/summary merge.
std::vector<double> bottleneck_fusion(std::span<const double> bottleneck,
                                      std::span<const double> mri_summary);

class Generator {
 public:
  struct ForwardOptions {
    bool zero_skips = false;  // connectivity probe for tests
  };

  // Per-call activation caches; reusable across calls, one per live thread.
  struct Workspace {
    nn::Tensor4 input;
    std::vector<nn::Tensor4> enc_conv_out, enc_norm_out, enc_act;
    std::vector<nn::InstanceNormCache> enc_norm_cache;
    nn::Tensor4 fused;
    std::vector<nn::Tensor4> dec_up_out, dec_concat, dec_conv_out, dec_norm_out,
        dec_act;
    std::vector<nn::InstanceNormCache> dec_norm_cache;
    nn::Tensor4 head_out;   // pre-activation
    nn::Tensor4 act_out;    // post-activation, decoder grid
    nn::Tensor4 output;     // resized to output_dims
  };

  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<nn::TensorRef>& params() const { return params_; }
  std::size_t parameter_count() const;

  // mri: normalized MRI voxels, row-major (D, H, W) per config.input_dims.
  const nn::Tensor4& forward(std::span<const double> mri, Workspace& ws) const {
    return forward(mri, ws, ForwardOptions());
  }
  const nn::Tensor4& forward(std::span<const double> mri, Workspace& ws,
                             const ForwardOptions& opts) const;

  // d_output: gradient at the resized output. Accumulates parameter
  // gradients into g (when non-null).
  void backward(const Workspace& ws, const nn::Tensor4& d_output,
                nn::GradBuffer* g) const;

  // Spec-surface wrapper: Volume in, 4D PET Volume out.
  Volume forward_volume(const Volume& normalized_mri) const;

 private:
  GeneratorConfig cfg_;
  std::vector<nn::Conv3d> enc_;
  std::vector<nn::InstanceNorm3d> enc_norm_;  // level 0 has none
  std::vector<nn::Conv3d> dec_;
  std::vector<nn::InstanceNorm3d> dec_norm_;
  nn::Conv3d head_;
  std::vector<nn::TensorRef> params_;

  int enc_channels(int level) const;
};

}  // namespace petsynth
