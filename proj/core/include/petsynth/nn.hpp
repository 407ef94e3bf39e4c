// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "petsynth/error.hpp"
#include "petsynth/rng.hpp"

namespace petsynth::nn {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Non-owning view of one named parameter tensor. Models hand out a stable,
// deterministically ordered list of these; the optimizer, gradient buffers
// and the checkpoint archive are all keyed to that order (and to the names).
struct TensorRef {
  std::string name;
  std::vector<int> shape;
  double* data = nullptr;
  std::size_t size = 0;
};

class ParamCollector {
 public:
  int add(const std::string& name, MatrixXd& m) {
    refs_.push_back({name,
                     {static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                     m.data(),
                     static_cast<std::size_t>(m.size())});
    return static_cast<int>(refs_.size()) - 1;
  }
  int add(const std::string& name, VectorXd& v) {
    refs_.push_back({name,
                     {static_cast<int>(v.size())},
                     v.data(),
                     static_cast<std::size_t>(v.size())});
    return static_cast<int>(refs_.size()) - 1;
  }
  int add(const std::string& name, RowVectorXd& v) {
    refs_.push_back({name,
                     {static_cast<int>(v.size())},
                     v.data(),
                     static_cast<std::size_t>(v.size())});
    return static_cast<int>(refs_.size()) - 1;
  }

  std::vector<TensorRef> take() { return std::move(refs_); }

 private:
  std::vector<TensorRef> refs_;
};

// Gradient storage aligned with a TensorRef list. Kept outside the model so
// concurrent per-sample backward passes can each own a buffer and be reduced
// in a fixed order afterwards.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const std::vector<TensorRef>& refs) { init(refs); }

  void init(const std::vector<TensorRef>& refs) {
    slots_.clear();
    slots_.reserve(refs.size());
    for (const auto& r : refs) slots_.emplace_back(r.size, 0.0);
  }
  void zero() {
    for (auto& s : slots_) std::fill(s.begin(), s.end(), 0.0);
  }
  void add_scaled(const GradBuffer& other, double scale) {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const auto& o = other.slots_[i];
      auto& s = slots_[i];
      for (std::size_t j = 0; j < s.size(); ++j) s[j] += scale * o[j];
    }
  }

  std::size_t count() const { return slots_.size(); }
  std::vector<double>& slot(int i) { return slots_[i]; }
  const std::vector<double>& slot(int i) const { return slots_[i]; }

  Eigen::Map<MatrixXd> mat(int i, long rows, long cols) {
    return Eigen::Map<MatrixXd>(slots_[i].data(), rows, cols);
  }
  Eigen::Map<RowVectorXd> row(int i) {
    return Eigen::Map<RowVectorXd>(slots_[i].data(), static_cast<long>(slots_[i].size()));
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& slot : slots_) {
      for (double v : slot) s += v * v;
    }
    return s;
  }
  double slot_squared_norm(int i) const {
    double s = 0.0;
    for (double v : slots_[i]) s += v * v;
    return s;
  }

 private:
  std::vector<std::vector<double>> slots_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(const std::vector<TensorRef>& refs, AdamConfig cfg = {});

  void step(const std::vector<TensorRef>& params, const GradBuffer& grads, double lr);

  long updates() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Checkpoint plumbing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_updates(long t) { t_ = t; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// y = x*w + b, activations as (tokens x features) rows.
struct Linear {
  MatrixXd w;  // (in x out)
  RowVectorXd b;
  int wi = -1, bi = -1;

  void init(Rng& rng, int in, int out, double stddev);
  void reg(ParamCollector& pc, const std::string& prefix);

  void forward(const MatrixXd& x, MatrixXd& y) const;
  void backward(const MatrixXd& x, const MatrixXd& dy, MatrixXd& dx,
                GradBuffer* g) const;
  // Variant when the input gradient is not needed (first layer of a head).
  void backward_params(const MatrixXd& x, const MatrixXd& dy, GradBuffer* g) const;
};

struct LayerNormCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

struct LayerNorm {
  VectorXd gamma, beta;
  int gi = -1, bi = -1;
  double eps = 1e-12;

  void init(int dim);
  void reg(ParamCollector& pc, const std::string& prefix);

  void forward(const MatrixXd& x, MatrixXd& y, LayerNormCache& cache) const;
  void backward(const MatrixXd& dy, const LayerNormCache& cache, MatrixXd& dx,
                GradBuffer* g) const;
};

// Exact (erf-based) GELU; caches the normal cdf/pdf per element for backward.
struct GeluCache {
  MatrixXd cdf;
  MatrixXd pdf_x;  // x * pdf(x)
};

void gelu_forward(const MatrixXd& x, MatrixXd& y, GeluCache& cache);
void gelu_backward(const MatrixXd& dy, const GeluCache& cache, MatrixXd& dx);

// Stable softmax cross-entropy for one row of logits. Returns the loss;
// when dlogits is non-null it receives softmax(l) - onehot(target).
double softmax_cross_entropy(const RowVectorXd& logits, int target,
                             RowVectorXd* dlogits);

// Row-wise softmax in place.
void softmax_rows(MatrixXd& m);

inline double tanhshrink(double x) { return x - std::tanh(x); }
inline double tanhshrink_grad(double x) {
  const double t = std::tanh(x);
  return t * t;
}

}  // namespace petsynth::nn
