// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "petsynth/conv3d.hpp"

namespace petsynth {

// Auxiliary volumetric discriminator: five conv layers over the PET volume
// (time-steps as channels), 2-channel patch logits averaged into one
// real/generated score pair.
class CnnDiscriminator {
 public:
  struct Workspace {
    nn::Tensor4 input;
    std::vector<nn::Tensor4> conv_out, norm_out, act;
    std::vector<nn::InstanceNormCache> norm_cache;
    nn::Tensor4 patch_logits;
    Eigen::Vector2d logits;
  };

  CnnDiscriminator(int time_steps, std::uint64_t seed);

  const std::vector<nn::TensorRef>& params() const { return params_; }

  Eigen::Vector2d forward(const nn::Tensor4& pet, Workspace& ws) const;
  // d_input may be null when only parameter gradients are wanted (and vice
  // versa during the generator pass).
  void backward(const Workspace& ws, const Eigen::RowVectorXd& dlogits,
                nn::Tensor4* d_input, nn::GradBuffer* g) const;

 private:
  static constexpr int kLayers = 5;
  std::array<nn::Conv3d, kLayers> conv_;
  std::array<nn::InstanceNorm3d, kLayers> norm_;  // layers 1..3 only
  std::vector<nn::TensorRef> params_;
};

}  // namespace petsynth
