// SPDX-License-Identifier: Apache-2.0
#include "petsynth/conv3d.hpp"

#include <algorithm>
#include <cmath>

namespace petsynth::nn {

namespace {

// Cap the im2col buffer at ~32 MB so 256^3 dry runs stay in budget.
constexpr std::size_t kMaxColDoubles = 4u << 20;

struct ConvGeom {
  int od, oh, ow;
  std::size_t out_spatial;
  long cols;  // in_c * k^3
};

ConvGeom geom(const Conv3d& c, const Tensor4& x) {
  auto dims = c.out_dims(x.spatial_dims());
  ConvGeom g;
  g.od = dims[0];
  g.oh = dims[1];
  g.ow = dims[2];
  g.out_spatial = static_cast<std::size_t>(g.od) * g.oh * g.ow;
  g.cols = static_cast<long>(c.in_c) * c.k * c.k * c.k;
  return g;
}

// Fill `col` rows [0, rows) with input taps for output voxels starting at
// linear output index `o0`.
void im2col_chunk(const Conv3d& c, const Tensor4& x, const ConvGeom& g,
                  std::size_t o0, long rows, MatrixXd& col) {
  col.resize(rows, g.cols);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  for (long r = 0; r < rows; ++r) {
    const std::size_t o = o0 + static_cast<std::size_t>(r);
    const int oz = static_cast<int>(o / (static_cast<std::size_t>(g.oh) * g.ow));
    const int rem = static_cast<int>(o % (static_cast<std::size_t>(g.oh) * g.ow));
    const int oy = rem / g.ow;
    const int ox = rem % g.ow;
    const int z0 = oz * c.stride - c.pad;
    const int y0 = oy * c.stride - c.pad;
    const int x0 = ox * c.stride - c.pad;
    long col_idx = 0;
    for (int ci = 0; ci < c.in_c; ++ci) {
      const double* src = x.channel(ci);
      for (int kz = 0; kz < c.k; ++kz) {
        const int z = z0 + kz;
        const bool z_ok = (z >= 0 && z < x.d);
        for (int ky = 0; ky < c.k; ++ky) {
          const int y = y0 + ky;
          const bool y_ok = (y >= 0 && y < x.h);
          const std::size_t base = z_ok && y_ok
                                       ? static_cast<std::size_t>(z) * plane +
                                             static_cast<std::size_t>(y) * x.w
                                       : 0;
          for (int kx = 0; kx < c.k; ++kx, ++col_idx) {
            const int xx = x0 + kx;
            col(r, col_idx) = (z_ok && y_ok && xx >= 0 && xx < x.w)
                                  ? src[base + xx]
                                  : 0.0;
          }
        }
      }
    }
  }
}

// Transpose of im2col_chunk: scatter-add column gradients back to dx.
void col2im_chunk(const Conv3d& c, Tensor4& dx, const ConvGeom& g,
                  std::size_t o0, long rows, const MatrixXd& dcol) {
  const std::size_t plane = static_cast<std::size_t>(dx.h) * dx.w;
  for (long r = 0; r < rows; ++r) {
    const std::size_t o = o0 + static_cast<std::size_t>(r);
    const int oz = static_cast<int>(o / (static_cast<std::size_t>(g.oh) * g.ow));
    const int rem = static_cast<int>(o % (static_cast<std::size_t>(g.oh) * g.ow));
    const int oy = rem / g.ow;
    const int ox = rem % g.ow;
    const int z0 = oz * c.stride - c.pad;
    const int y0 = oy * c.stride - c.pad;
    const int x0 = ox * c.stride - c.pad;
    long col_idx = 0;
    for (int ci = 0; ci < c.in_c; ++ci) {
      double* dst = dx.channel(ci);
      for (int kz = 0; kz < c.k; ++kz) {
        const int z = z0 + kz;
        const bool z_ok = (z >= 0 && z < dx.d);
        for (int ky = 0; ky < c.k; ++ky) {
          const int y = y0 + ky;
          const bool y_ok = (y >= 0 && y < dx.h);
          const std::size_t base = z_ok && y_ok
                                       ? static_cast<std::size_t>(z) * plane +
                                             static_cast<std::size_t>(y) * dx.w
                                       : 0;
          for (int kx = 0; kx < c.k; ++kx, ++col_idx) {
            const int xx = x0 + kx;
            if (z_ok && y_ok && xx >= 0 && xx < dx.w) {
              dst[base + xx] += dcol(r, col_idx);
            }
          }
        }
      }
    }
  }
}

}  // namespace

void Conv3d::init(Rng& rng, int in_channels, int out_channels, int kernel,
                  int stride_, int pad_, double stddev) {
  in_c = in_channels;
  out_c = out_channels;
  k = kernel;
  stride = stride_;
  pad = pad_;
  w.resize(static_cast<long>(in_c) * k * k * k, out_c);
  for (long j = 0; j < w.cols(); ++j) {
    for (long i = 0; i < w.rows(); ++i) w(i, j) = rng.normal(0.0, stddev);
  }
  b = RowVectorXd::Zero(out_c);
}

void Conv3d::reg(ParamCollector& pc, const std::string& prefix) {
  wi = pc.add(prefix + ".w", w);
  bi = pc.add(prefix + ".b", b);
}

void Conv3d::forward(const Tensor4& x, Tensor4& y) const {
  require(x.c == in_c, ErrorCode::DimMismatch, "conv3d channel mismatch");
  const ConvGeom g = geom(*this, x);
  y.resize(out_c, g.od, g.oh, g.ow);

  const long chunk_rows = std::max<long>(
      1, static_cast<long>(kMaxColDoubles / static_cast<std::size_t>(g.cols)));
  MatrixXd col, out_chunk;
  for (std::size_t o0 = 0; o0 < g.out_spatial; o0 += static_cast<std::size_t>(chunk_rows)) {
    const long rows = static_cast<long>(
        std::min<std::size_t>(chunk_rows, g.out_spatial - o0));
    im2col_chunk(*this, x, g, o0, rows, col);
    out_chunk.noalias() = col * w;
    out_chunk.rowwise() += b;
    for (int oc = 0; oc < out_c; ++oc) {
      double* dst = y.channel(oc) + o0;
      const double* src = out_chunk.col(oc).data();
      std::copy(src, src + rows, dst);
    }
  }
}

void Conv3d::backward(const Tensor4& x, const Tensor4& dy, Tensor4* dx,
                      GradBuffer* g) const {
  const ConvGeom gm = geom(*this, x);
  require(dy.c == out_c && dy.d == gm.od && dy.h == gm.oh && dy.w == gm.ow,
          ErrorCode::DimMismatch, "conv3d backward dims mismatch");
  if (dx != nullptr) dx->resize(in_c, x.d, x.h, x.w);

  const long chunk_rows = std::max<long>(
      1, static_cast<long>(kMaxColDoubles / static_cast<std::size_t>(gm.cols)));
  MatrixXd col, dcol, dy_chunk;
  for (std::size_t o0 = 0; o0 < gm.out_spatial; o0 += static_cast<std::size_t>(chunk_rows)) {
    const long rows = static_cast<long>(
        std::min<std::size_t>(chunk_rows, gm.out_spatial - o0));
    dy_chunk.resize(rows, out_c);
    for (int oc = 0; oc < out_c; ++oc) {
      const double* src = dy.channel(oc) + o0;
      std::copy(src, src + rows, dy_chunk.col(oc).data());
    }
    if (g != nullptr) {
      im2col_chunk(*this, x, gm, o0, rows, col);
      g->mat(wi, w.rows(), w.cols()).noalias() += col.transpose() * dy_chunk;
      g->row(bi) += dy_chunk.colwise().sum();
    }
    if (dx != nullptr) {
      dcol.noalias() = dy_chunk * w.transpose();
      col2im_chunk(*this, *dx, gm, o0, rows, dcol);
    }
  }
}

void InstanceNorm3d::init(int channels) {
  gamma = VectorXd::Ones(channels);
  beta = VectorXd::Zero(channels);
}

void InstanceNorm3d::reg(ParamCollector& pc, const std::string& prefix) {
  gi = pc.add(prefix + ".gamma", gamma);
  bi = pc.add(prefix + ".beta", beta);
}

void InstanceNorm3d::forward(const Tensor4& x, Tensor4& y,
                             InstanceNormCache& cache) const {
  require(x.c == gamma.size(), ErrorCode::DimMismatch, "instance norm channels");
  y.resize(x.c, x.d, x.h, x.w);
  cache.xhat.resize(x.c, x.d, x.h, x.w);
  cache.inv_std.assign(x.c, 0.0);
  const std::size_t n = x.spatial();
  for (int c = 0; c < x.c; ++c) {
    const double* src = x.channel(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += src[i];
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = src[i] - mean;
      sq += d * d;
    }
    const double inv = 1.0 / std::sqrt(sq / static_cast<double>(n) + eps);
    cache.inv_std[c] = inv;
    double* xh = cache.xhat.channel(c);
    double* dst = y.channel(c);
    const double gcc = gamma(c), bcc = beta(c);
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = (src[i] - mean) * inv;
      dst[i] = gcc * xh[i] + bcc;
    }
  }
}

void InstanceNorm3d::backward(const Tensor4& dy, const InstanceNormCache& cache,
                              Tensor4& dx, GradBuffer* g) const {
  dx.resize(dy.c, dy.d, dy.h, dy.w);
  const std::size_t n = dy.spatial();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int c = 0; c < dy.c; ++c) {
    const double* dyc = dy.channel(c);
    const double* xh = cache.xhat.channel(c);
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += dyc[i];
      sum_dy_xh += dyc[i] * xh[i];
    }
    if (g != nullptr) {
      g->slot(gi)[c] += sum_dy_xh;
      g->slot(bi)[c] += sum_dy;
    }
    const double m1 = sum_dy * inv_n;
    const double m2 = sum_dy_xh * inv_n;
    const double scale = gamma(c) * cache.inv_std[c];
    double* dst = dx.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = scale * (dyc[i] - m1 - xh[i] * m2);
    }
  }
}

void leaky_relu_forward(const Tensor4& x, Tensor4& y, double slope) {
  y.resize(x.c, x.d, x.h, x.w);
  for (std::size_t i = 0; i < x.total(); ++i) {
    y.v[i] = x.v[i] > 0.0 ? x.v[i] : slope * x.v[i];
  }
}

void leaky_relu_backward(const Tensor4& x, const Tensor4& dy, Tensor4& dx,
                         double slope) {
  dx.resize(x.c, x.d, x.h, x.w);
  for (std::size_t i = 0; i < x.total(); ++i) {
    dx.v[i] = dy.v[i] * (x.v[i] > 0.0 ? 1.0 : slope);
  }
}

void upsample2_forward(const Tensor4& x, Tensor4& y) {
  y.resize(x.c, x.d * 2, x.h * 2, x.w * 2);
  for (int c = 0; c < x.c; ++c) {
    const double* src = x.channel(c);
    double* dst = y.channel(c);
    for (int z = 0; z < y.d; ++z) {
      for (int yy = 0; yy < y.h; ++yy) {
        const std::size_t src_row =
            (static_cast<std::size_t>(z / 2) * x.h + yy / 2) * x.w;
        std::size_t dst_row = (static_cast<std::size_t>(z) * y.h + yy) * y.w;
        for (int xx = 0; xx < y.w; ++xx) {
          dst[dst_row + xx] = src[src_row + xx / 2];
        }
      }
    }
  }
}

void upsample2_backward(const Tensor4& dy, Tensor4& dx, int in_d, int in_h,
                        int in_w) {
  dx.resize(dy.c, in_d, in_h, in_w);
  for (int c = 0; c < dy.c; ++c) {
    const double* src = dy.channel(c);
    double* dst = dx.channel(c);
    for (int z = 0; z < dy.d; ++z) {
      for (int yy = 0; yy < dy.h; ++yy) {
        const std::size_t dst_row =
            (static_cast<std::size_t>(z / 2) * in_h + yy / 2) * in_w;
        const std::size_t src_row = (static_cast<std::size_t>(z) * dy.h + yy) * dy.w;
        for (int xx = 0; xx < dy.w; ++xx) {
          dst[dst_row + xx / 2] += src[src_row + xx];
        }
      }
    }
  }
}

namespace {

struct Lerp {
  int i0, i1;
  double t;
};

Lerp lerp_coord(int out_i, int out_n, int in_n) {
  const double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
  const double clamped = std::min(std::max(src, 0.0), static_cast<double>(in_n - 1));
  Lerp l;
  l.i0 = static_cast<int>(clamped);
  l.i1 = std::min(l.i0 + 1, in_n - 1);
  l.t = clamped - l.i0;
  return l;
}

}  // namespace

void resize_trilinear_forward(const Tensor4& x, Tensor4& y, int od, int oh,
                              int ow) {
  y.resize(x.c, od, oh, ow);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  for (int c = 0; c < x.c; ++c) {
    const double* src = x.channel(c);
    double* dst = y.channel(c);
    std::size_t o = 0;
    for (int z = 0; z < od; ++z) {
      const Lerp lz = lerp_coord(z, od, x.d);
      for (int yy = 0; yy < oh; ++yy) {
        const Lerp ly = lerp_coord(yy, oh, x.h);
        for (int xx = 0; xx < ow; ++xx, ++o) {
          const Lerp lx = lerp_coord(xx, ow, x.w);
          auto at = [&](int zz, int yi, int xi) {
            return src[static_cast<std::size_t>(zz) * plane +
                       static_cast<std::size_t>(yi) * x.w + xi];
          };
          const double c00 = at(lz.i0, ly.i0, lx.i0) * (1 - lx.t) + at(lz.i0, ly.i0, lx.i1) * lx.t;
          const double c01 = at(lz.i0, ly.i1, lx.i0) * (1 - lx.t) + at(lz.i0, ly.i1, lx.i1) * lx.t;
          const double c10 = at(lz.i1, ly.i0, lx.i0) * (1 - lx.t) + at(lz.i1, ly.i0, lx.i1) * lx.t;
          const double c11 = at(lz.i1, ly.i1, lx.i0) * (1 - lx.t) + at(lz.i1, ly.i1, lx.i1) * lx.t;
          const double c0 = c00 * (1 - ly.t) + c01 * ly.t;
          const double c1 = c10 * (1 - ly.t) + c11 * ly.t;
          dst[o] = c0 * (1 - lz.t) + c1 * lz.t;
        }
      }
    }
  }
}

void resize_trilinear_backward(const Tensor4& dy, Tensor4& dx, int in_d,
                               int in_h, int in_w) {
  dx.resize(dy.c, in_d, in_h, in_w);
  const std::size_t plane = static_cast<std::size_t>(in_h) * in_w;
  for (int c = 0; c < dy.c; ++c) {
    const double* src = dy.channel(c);
    double* dst = dx.channel(c);
    std::size_t o = 0;
    for (int z = 0; z < dy.d; ++z) {
      const Lerp lz = lerp_coord(z, dy.d, in_d);
      for (int yy = 0; yy < dy.h; ++yy) {
        const Lerp ly = lerp_coord(yy, dy.h, in_h);
        for (int xx = 0; xx < dy.w; ++xx, ++o) {
          const Lerp lx = lerp_coord(xx, dy.w, in_w);
          const double gv = src[o];
          auto add = [&](int zz, int yi, int xi, double wgt) {
            dst[static_cast<std::size_t>(zz) * plane +
                static_cast<std::size_t>(yi) * in_w + xi] += gv * wgt;
          };
          add(lz.i0, ly.i0, lx.i0, (1 - lz.t) * (1 - ly.t) * (1 - lx.t));
          add(lz.i0, ly.i0, lx.i1, (1 - lz.t) * (1 - ly.t) * lx.t);
          add(lz.i0, ly.i1, lx.i0, (1 - lz.t) * ly.t * (1 - lx.t));
          add(lz.i0, ly.i1, lx.i1, (1 - lz.t) * ly.t * lx.t);
          add(lz.i1, ly.i0, lx.i0, lz.t * (1 - ly.t) * (1 - lx.t));
          add(lz.i1, ly.i0, lx.i1, lz.t * (1 - ly.t) * lx.t);
          add(lz.i1, ly.i1, lx.i0, lz.t * ly.t * (1 - lx.t));
          add(lz.i1, ly.i1, lx.i1, lz.t * ly.t * lx.t);
        }
      }
    }
  }
}

}  // namespace petsynth::nn
