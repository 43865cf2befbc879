/*
Copyright 2026 The drvk Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstdint>
#include <vector>

#include "drvk/common.hpp"
#include "drvk/rng.hpp"

namespace drvk {

enum class Activation : uint32_t { kRelu = 0, kIdentity = 1 };

inline Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::kIdentity) return z;
  return z.cwiseMax(0.0);
}

inline Matrix activate_grad_mask(const Matrix& z, Activation act) {
  if (act == Activation::kIdentity) return Matrix::Ones(z.rows(), z.cols());
  return (z.array() > 0.0).cast<double>();
}

// Per-dimension affine feature normalization, stored with every model and
// applied around the raw network.
struct Normalizer {
  Vector mean;
  Vector stddev;

  int dim() const { return static_cast<int>(mean.size()); }

  static Normalizer identity(int dim) {
    Normalizer n;
    n.mean = Vector::Zero(dim);
    n.stddev = Vector::Ones(dim);
    return n;
  }

  void validate(int expect_dim) const {
    if (mean.size() != expect_dim || stddev.size() != expect_dim)
      throw DataError("normalizer: dimension mismatch");
    for (Eigen::Index i = 0; i < stddev.size(); ++i)
      if (!(stddev(i) > 0.0)) throw DataError("normalizer: non-positive std");
  }

  Matrix apply(const Matrix& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() /
           stddev.transpose().array();
  }

  Matrix invert(const Matrix& x) const {
    return (x.array().rowwise() * stddev.transpose().array()).matrix().rowwise() +
           mean.transpose();
  }
};

// Streaming per-dimension moments used to fit normalizers over feature sets
// that never need to be in memory at once. Merging is exact, so subset
// statistics compose deterministically.
struct MomentStats {
  int64_t count = 0;
  Vector sum;
  Vector sumsq;

  explicit MomentStats(int dim = 0)
      : sum(Vector::Zero(dim)), sumsq(Vector::Zero(dim)) {}

  void accumulate(const Matrix& rows) {
    if (sum.size() == 0) {
      sum = Vector::Zero(rows.cols());
      sumsq = Vector::Zero(rows.cols());
    }
    if (rows.cols() != sum.size()) throw DataError("moment stats: dimension mismatch");
    count += rows.rows();
    sum += rows.colwise().sum().transpose();
    sumsq += rows.array().square().matrix().colwise().sum().transpose();
  }

  void merge(const MomentStats& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    if (other.sum.size() != sum.size()) throw DataError("moment stats: dimension mismatch");
    count += other.count;
    sum += other.sum;
    sumsq += other.sumsq;
  }

  Normalizer to_normalizer() const {
    if (count <= 0) throw DataError("moment stats: no data accumulated");
    Normalizer n;
    const double inv = 1.0 / static_cast<double>(count);
    n.mean = sum * inv;
    n.stddev = (sumsq * inv - n.mean.cwiseProduct(n.mean)).cwiseMax(0.0).cwiseSqrt();
    n.stddev = n.stddev.cwiseMax(1e-8);
    return n;
  }
};

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMajorMatrix>;
using ConstMatView = Eigen::Map<const RowMajorMatrix>;
using VecView = Eigen::Map<Vector>;
using ConstVecView = Eigen::Map<const Vector>;

struct HddaeSpec {
  int input_dim = 2827;
  int hidden_dim = 2048;
  int output_dim = 257;
  int hidden_layers = 3;  // L; layer L receives concat(W_L h_{L-1}, h_1)
  Activation activation = Activation::kRelu;

  void validate() const {
    if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0)
      throw DataError("hddae spec: dimensions must be positive");
    if (hidden_layers < 2) throw DataError("hddae spec: need at least 2 hidden layers");
  }
};

// Highway deep denoising autoencoder. Hidden layers 1..L-1 are standard
// dense+activation; the pre-activation of layer L is the concatenation of
// W_L h_{L-1} with h_1, then bias (length 2*hidden) and activation; a linear
// output layer maps the 2*hidden vector to the output dimension.
//
// Parameters live in one flat vector (checkpoint order: W_1, b_1, ...,
// W_L, b_L, W_out, b_out; matrices row-major, shape out x in).
class HddaeModel {
 public:
  HddaeModel() = default;

  explicit HddaeModel(const HddaeSpec& spec) : spec_(spec) {
    spec_.validate();
    build_layout();
    theta_.assign(total_params_, 0.0);
    in_norm_ = Normalizer::identity(spec_.input_dim);
    out_norm_ = Normalizer::identity(spec_.output_dim);
  }

  const HddaeSpec& spec() const { return spec_; }
  size_t param_count() const { return total_params_; }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }

  Normalizer& input_norm() { return in_norm_; }
  const Normalizer& input_norm() const { return in_norm_; }
  Normalizer& output_norm() { return out_norm_; }
  const Normalizer& output_norm() const { return out_norm_; }

  // l in [1, L] for hidden layers, L+1 for the output layer.
  MatView weight(int l) { return view(theta_.data(), w_off_[l - 1], w_rows_[l - 1], w_cols_[l - 1]); }
  ConstMatView weight(int l) const {
    return cview(theta_.data(), w_off_[l - 1], w_rows_[l - 1], w_cols_[l - 1]);
  }
  VecView bias(int l) { return VecView(theta_.data() + b_off_[l - 1], b_len_[l - 1]); }
  ConstVecView bias(int l) const {
    return ConstVecView(theta_.data() + b_off_[l - 1], b_len_[l - 1]);
  }

  // He-uniform for the hidden stack, Xavier-uniform for the linear output,
  // zero biases. Draw order is fixed by the parameter layout.
  void init_params(uint64_t seed) {
    Rng rng(seed);
    const int layers = spec_.hidden_layers + 1;
    for (int l = 1; l <= layers; ++l) {
      auto w = weight(l);
      const double fan_in = static_cast<double>(w.cols());
      const double limit = l <= spec_.hidden_layers
                               ? std::sqrt(6.0 / fan_in)
                               : std::sqrt(6.0 / (fan_in + w.rows()));
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
      bias(l).setZero();
    }
  }

  // Batched forward pass. Output rows can depend on Eigen's panel blocking,
  // i.e. this is deterministic for a fixed batch but per-row results are not
  // guaranteed independent of batch composition; use forward() for that.
  Matrix forward_batched(const Matrix& x) const {
    Workspace ws;
    run_forward(x, ws);
    return std::move(ws.output);
  }

  // Row-independent forward: every row is processed as its own batch, so the
  // result for a given row is bit-identical regardless of batch order.
  Matrix forward(const Matrix& x) const {
    Matrix out(x.rows(), spec_.output_dim);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      out.row(r) = forward_batched(x.row(r));
    return out;
  }

  // Post-activation hidden states h_1..h_L for one batch (testing hook).
  std::vector<Matrix> forward_trace(const Matrix& x) const {
    Workspace ws;
    run_forward(x, ws);
    return std::move(ws.hidden);
  }

  // Mean-over-rows squared L2 loss against `target` plus exact gradients of
  // every parameter, written into `grad` (layout identical to params()).
  // The highway path contributes to h_1's gradient both through the chain of
  // middle layers and directly from the concat at layer L.
  double loss_and_grad(const Matrix& x, const Matrix& target, std::vector<double>& grad,
                       Vector* row_losses = nullptr) const {
    if (target.rows() != x.rows() || target.cols() != spec_.output_dim)
      throw DataError("hddae: target shape mismatch");
    Workspace ws;
    run_forward(x, ws);
    grad.assign(total_params_, 0.0);

    const int L = spec_.hidden_layers;
    const double n = static_cast<double>(x.rows());
    const Matrix resid = ws.output - target;
    if (row_losses) *row_losses = resid.rowwise().squaredNorm();
    const double loss = resid.squaredNorm() / n;

    // Through output denormalization.
    Matrix d = (2.0 / n) * resid;
    d = d.array().rowwise() * out_norm_.stddev.transpose().array();

    auto gw = [&](int l) { return view(grad.data(), w_off_[l - 1], w_rows_[l - 1], w_cols_[l - 1]); };
    auto gb = [&](int l) { return VecView(grad.data() + b_off_[l - 1], b_len_[l - 1]); };

    gw(L + 1).noalias() = d.transpose() * ws.hidden[L - 1];
    gb(L + 1) = d.colwise().sum().transpose();

    Matrix dh = d * weight(L + 1);                             // N x 2H
    Matrix dz = dh.cwiseProduct(activate_grad_mask(ws.pre[L - 1], spec_.activation));
    gb(L) = dz.colwise().sum().transpose();
    const Matrix da = dz.leftCols(spec_.hidden_dim);           // concat branch 1
    const Matrix dh1_highway = dz.rightCols(spec_.hidden_dim); // concat branch 2
    gw(L).noalias() = da.transpose() * ws.hidden[L - 2];

    Matrix dprev = da * weight(L);  // gradient w.r.t. h_{L-1}
    for (int l = L - 1; l >= 2; --l) {
      Matrix dzl = dprev.cwiseProduct(activate_grad_mask(ws.pre[l - 1], spec_.activation));
      gb(l) = dzl.colwise().sum().transpose();
      gw(l).noalias() = dzl.transpose() * ws.hidden[l - 2];
      dprev = dzl * weight(l);
    }

    Matrix dh1 = dprev + dh1_highway;
    Matrix dz1 = dh1.cwiseProduct(activate_grad_mask(ws.pre[0], spec_.activation));
    gb(1) = dz1.colwise().sum().transpose();
    gw(1).noalias() = dz1.transpose() * ws.input_norm;
    return loss;
  }

 private:
  struct Workspace {
    Matrix input_norm;
    std::vector<Matrix> pre;     // pre-activation per hidden layer (layer L: N x 2H)
    std::vector<Matrix> hidden;  // post-activation per hidden layer
    Matrix output;
  };

  static MatView view(double* base, size_t off, int rows, int cols) {
    return MatView(base + off, rows, cols);
  }
  static ConstMatView cview(const double* base, size_t off, int rows, int cols) {
    return ConstMatView(base + off, rows, cols);
  }

  void run_forward(const Matrix& x, Workspace& ws) const {
    if (x.cols() != spec_.input_dim) throw DataError("hddae: input dimension mismatch");
    in_norm_.validate(spec_.input_dim);
    out_norm_.validate(spec_.output_dim);
    const int L = spec_.hidden_layers;
    ws.pre.resize(L);
    ws.hidden.resize(L);

    ws.input_norm = in_norm_.apply(x);
    ws.pre[0] = (ws.input_norm * weight(1).transpose()).rowwise() + bias(1).transpose();
    ws.hidden[0] = activate(ws.pre[0], spec_.activation);

    for (int l = 2; l <= L - 1; ++l) {
      ws.pre[l - 1] =
          (ws.hidden[l - 2] * weight(l).transpose()).rowwise() + bias(l).transpose();
      ws.hidden[l - 1] = activate(ws.pre[l - 1], spec_.activation);
    }

    Matrix concat(x.rows(), 2 * spec_.hidden_dim);
    concat.leftCols(spec_.hidden_dim).noalias() = ws.hidden[L - 2] * weight(L).transpose();
    concat.rightCols(spec_.hidden_dim) = ws.hidden[0];
    ws.pre[L - 1] = concat.rowwise() + bias(L).transpose();
    ws.hidden[L - 1] = activate(ws.pre[L - 1], spec_.activation);

    Matrix out_n =
        (ws.hidden[L - 1] * weight(L + 1).transpose()).rowwise() + bias(L + 1).transpose();
    ws.output = out_norm_.invert(out_n);
  }

  void build_layout() {
    const int L = spec_.hidden_layers;
    w_off_.clear();
    b_off_.clear();
    w_rows_.clear();
    w_cols_.clear();
    b_len_.clear();
    size_t off = 0;
    auto add = [&](int rows, int cols, int blen) {
      w_off_.push_back(off);
      w_rows_.push_back(rows);
      w_cols_.push_back(cols);
      off += static_cast<size_t>(rows) * cols;
      b_off_.push_back(off);
      b_len_.push_back(blen);
      off += blen;
    };
    add(spec_.hidden_dim, spec_.input_dim, spec_.hidden_dim);  // layer 1
    for (int l = 2; l <= L - 1; ++l) add(spec_.hidden_dim, spec_.hidden_dim, spec_.hidden_dim);
    add(spec_.hidden_dim, spec_.hidden_dim, 2 * spec_.hidden_dim);      // layer L
    add(spec_.output_dim, 2 * spec_.hidden_dim, spec_.output_dim);      // output
    total_params_ = off;
  }

  HddaeSpec spec_;
  std::vector<double> theta_;
  std::vector<size_t> w_off_, b_off_;
  std::vector<int> w_rows_, w_cols_, b_len_;
  size_t total_params_ = 0;
  Normalizer in_norm_, out_norm_;
};

}  // namespace drvk
