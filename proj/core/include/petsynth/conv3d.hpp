// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "petsynth/nn.hpp"

namespace petsynth::nn {

// Channel-major dense feature map (C, D, H, W), doubles.
struct Tensor4 {
  int c = 0, d = 0, h = 0, w = 0;
  std::vector<double> v;

  void resize(int c_, int d_, int h_, int w_) {
    c = c_;
    d = d_;
    h = h_;
    w = w_;
    v.assign(static_cast<std::size_t>(c) * d * h * w, 0.0);
  }
  std::size_t spatial() const { return static_cast<std::size_t>(d) * h * w; }
  std::size_t total() const { return v.size(); }
  double* channel(int ci) { return v.data() + spatial() * ci; }
  const double* channel(int ci) const { return v.data() + spatial() * ci; }
  std::array<int, 3> spatial_dims() const { return {d, h, w}; }
};

// 3D convolution via chunked im2col + GEMM. Strides/padding are uniform per
// axis. The column buffer is rebuilt in backward instead of cached, which
// bounds memory at full-scale inputs.
struct Conv3d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  MatrixXd w;  // (in_c * k^3) x out_c
  RowVectorXd b;
  int wi = -1, bi = -1;

  void init(Rng& rng, int in_channels, int out_channels, int kernel,
            int stride_, int pad_, double stddev);
  void reg(ParamCollector& pc, const std::string& prefix);

  std::array<int, 3> out_dims(const std::array<int, 3>& in) const {
    auto o = [&](int n) { return (n + 2 * pad - k) / stride + 1; };
    return {o(in[0]), o(in[1]), o(in[2])};
  }

  void forward(const Tensor4& x, Tensor4& y) const;
  void backward(const Tensor4& x, const Tensor4& dy, Tensor4* dx,
                GradBuffer* g) const;
};

struct InstanceNormCache {
  Tensor4 xhat;
  std::vector<double> inv_std;  // per channel
};

// Per-channel normalization over the spatial extent, with affine gain/bias.
struct InstanceNorm3d {
  VectorXd gamma, beta;
  int gi = -1, bi = -1;
  double eps = 1e-5;

  void init(int channels);
  void reg(ParamCollector& pc, const std::string& prefix);

  void forward(const Tensor4& x, Tensor4& y, InstanceNormCache& cache) const;
  void backward(const Tensor4& dy, const InstanceNormCache& cache, Tensor4& dx,
                GradBuffer* g) const;
};

void leaky_relu_forward(const Tensor4& x, Tensor4& y, double slope);
void leaky_relu_backward(const Tensor4& x, const Tensor4& dy, Tensor4& dx,
                         double slope);

// Nearest-neighbor doubling of the spatial grid.
void upsample2_forward(const Tensor4& x, Tensor4& y);
void upsample2_backward(const Tensor4& dy, Tensor4& dx, int in_d, int in_h, int in_w);

// Trilinear resample to an arbitrary spatial grid (half-pixel centers).
void resize_trilinear_forward(const Tensor4& x, Tensor4& y, int od, int oh, int ow);
void resize_trilinear_backward(const Tensor4& dy, Tensor4& dx, int in_d, int in_h,
                               int in_w);

}  // namespace petsynth::nn
