// SPDX-License-Identifier: Apache-2.0
#include "petsynth/nn.hpp"

#include <cmath>

namespace petsynth::nn {

Adam::Adam(const std::vector<TensorRef>& refs, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(refs.size());
  v_.reserve(refs.size());
  for (const auto& r : refs) {
    m_.emplace_back(r.size, 0.0);
    v_.emplace_back(r.size, 0.0);
  }
}

void Adam::step(const std::vector<TensorRef>& params, const GradBuffer& grads,
                double lr) {
  require(params.size() == m_.size(), ErrorCode::InvalidArgument,
          "optimizer/parameter shape drift");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data;
    double* m = m_[i].data();
    double* v = v_[i].data();
    const auto& g = grads.slot(static_cast<int>(i));
    for (std::size_t j = 0; j < params[i].size; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Linear::init(Rng& rng, int in, int out, double stddev) {
  w.resize(in, out);
  for (long j = 0; j < w.cols(); ++j) {
    for (long i = 0; i < w.rows(); ++i) w(i, j) = rng.normal(0.0, stddev);
  }
  b = RowVectorXd::Zero(out);
}

void Linear::reg(ParamCollector& pc, const std::string& prefix) {
  wi = pc.add(prefix + ".w", w);
  bi = pc.add(prefix + ".b", b);
}

void Linear::forward(const MatrixXd& x, MatrixXd& y) const {
  y.noalias() = x * w;
  y.rowwise() += b;
}

void Linear::backward(const MatrixXd& x, const MatrixXd& dy, MatrixXd& dx,
                      GradBuffer* g) const {
  dx.noalias() = dy * w.transpose();
  if (g != nullptr) {
    g->mat(wi, w.rows(), w.cols()).noalias() += x.transpose() * dy;
    g->row(bi) += dy.colwise().sum();
  }
}

void Linear::backward_params(const MatrixXd& x, const MatrixXd& dy,
                             GradBuffer* g) const {
  if (g != nullptr) {
    g->mat(wi, w.rows(), w.cols()).noalias() += x.transpose() * dy;
    g->row(bi) += dy.colwise().sum();
  }
}

void LayerNorm::init(int dim) {
  gamma = VectorXd::Ones(dim);
  beta = VectorXd::Zero(dim);
}

void LayerNorm::reg(ParamCollector& pc, const std::string& prefix) {
  gi = pc.add(prefix + ".gamma", gamma);
  bi = pc.add(prefix + ".beta", beta);
}

void LayerNorm::forward(const MatrixXd& x, MatrixXd& y,
                        LayerNormCache& cache) const {
  const long n = x.rows(), dim = x.cols();
  cache.xhat.resize(n, dim);
  cache.inv_std.resize(n);
  for (long i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std(i) = inv;
    cache.xhat.row(i) = (x.row(i).array() - mean) * inv;
  }
  y.resize(n, dim);
  for (long i = 0; i < n; ++i) {
    y.row(i) = cache.xhat.row(i).cwiseProduct(gamma.transpose()) + beta.transpose();
  }
}

void LayerNorm::backward(const MatrixXd& dy, const LayerNormCache& cache,
                         MatrixXd& dx, GradBuffer* g) const {
  const long n = dy.rows(), dim = dy.cols();
  dx.resize(n, dim);
  Eigen::RowVectorXd gamma_t = gamma.transpose();
  for (long i = 0; i < n; ++i) {
    // dxhat = dy * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
    Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gamma_t);
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = cache.inv_std(i) *
                (dxhat.array() - m1 - cache.xhat.row(i).array() * m2);
  }
  if (g != nullptr) {
    auto ggamma = g->row(gi);
    auto gbeta = g->row(bi);
    ggamma += dy.cwiseProduct(cache.xhat).colwise().sum();
    gbeta += dy.colwise().sum();
  }
}

void gelu_forward(const MatrixXd& x, MatrixXd& y, GeluCache& cache) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  const long n = x.rows(), m = x.cols();
  y.resize(n, m);
  cache.cdf.resize(n, m);
  cache.pdf_x.resize(n, m);
  const double* xi = x.data();
  double* yi = y.data();
  double* ci = cache.cdf.data();
  double* pi = cache.pdf_x.data();
  const long total = n * m;
  for (long i = 0; i < total; ++i) {
    const double v = xi[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    ci[i] = cdf;
    pi[i] = v * inv_sqrt2pi * std::exp(-0.5 * v * v);
    yi[i] = v * cdf;
  }
}

void gelu_backward(const MatrixXd& dy, const GeluCache& cache, MatrixXd& dx) {
  dx = dy.cwiseProduct(cache.cdf + cache.pdf_x);
}

double softmax_cross_entropy(const RowVectorXd& logits, int target,
                             RowVectorXd* dlogits) {
  require(target >= 0 && target < logits.size(), ErrorCode::InvalidArgument,
          "cross-entropy target out of range");
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  const double loss = lse - logits(target);
  if (dlogits != nullptr) {
    *dlogits = (logits.array() - lse).exp();
    (*dlogits)(target) -= 1.0;
  }
  return loss;
}

void softmax_rows(MatrixXd& m) {
  for (long i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace petsynth::nn
