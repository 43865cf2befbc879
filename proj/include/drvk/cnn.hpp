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

#include <vector>

#include "drvk/common.hpp"
#include "drvk/nn.hpp"

namespace drvk {

struct FusionCnnSpec {
  int in_channels = 3;     // P specialist channels
  int bins = 257;          // frequency axis length
  int conv_layers = 2;     // J-1
  int conv_channels = 32;  // feature maps T per conv layer
  int kernel = 11;         // width along frequency, odd, same-padding
  int fc_dim = 2048;
  Activation activation = Activation::kRelu;

  int input_dim() const { return in_channels * bins; }
  int output_dim() const { return bins; }

  void validate() const {
    if (in_channels <= 0 || bins <= 0 || conv_channels <= 0 || fc_dim <= 0)
      throw DataError("cnn spec: dimensions must be positive");
    if (conv_layers < 1) throw DataError("cnn spec: need at least one conv layer");
    if (kernel < 1 || kernel % 2 == 0) throw DataError("cnn spec: kernel width must be odd");
  }
};

// Ensemble-integration network: a stack of 1-D convolutions along the
// frequency axis over P input channels, a fully connected hidden layer and a
// linear output layer.
//
// Rows of the in-memory batch are channel-major: [ch0 bins..., ch1 bins...].
// Parameter order: conv W/b per layer (W shape T x in_ch*kernel, row-major
// [out][in][tap]), then FC W/b, then output W/b.
class FusionCnnModel {
 public:
  FusionCnnModel() = default;

  explicit FusionCnnModel(const FusionCnnSpec& spec) : spec_(spec) {
    spec_.validate();
    build_layout();
    theta_.assign(total_params_, 0.0);
    in_norm_ = Normalizer::identity(spec_.input_dim());
    out_norm_ = Normalizer::identity(spec_.output_dim());
  }

  const FusionCnnSpec& spec() const { return spec_; }
  size_t param_count() const { return total_params_; }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }

  Normalizer& input_norm() { return in_norm_; }
  const Normalizer& input_norm() const { return in_norm_; }
  Normalizer& output_norm() { return out_norm_; }
  const Normalizer& output_norm() const { return out_norm_; }

  MatView conv_weight(int c) { return MatView(theta_.data() + cw_off_[c], spec_.conv_channels, in_ch(c) * spec_.kernel); }
  ConstMatView conv_weight(int c) const { return ConstMatView(theta_.data() + cw_off_[c], spec_.conv_channels, in_ch(c) * spec_.kernel); }
  VecView conv_bias(int c) { return VecView(theta_.data() + cb_off_[c], spec_.conv_channels); }
  ConstVecView conv_bias(int c) const { return ConstVecView(theta_.data() + cb_off_[c], spec_.conv_channels); }
  MatView fc_weight() { return MatView(theta_.data() + fcw_off_, spec_.fc_dim, spec_.conv_channels * spec_.bins); }
  ConstMatView fc_weight() const { return ConstMatView(theta_.data() + fcw_off_, spec_.fc_dim, spec_.conv_channels * spec_.bins); }
  VecView fc_bias() { return VecView(theta_.data() + fcb_off_, spec_.fc_dim); }
  ConstVecView fc_bias() const { return ConstVecView(theta_.data() + fcb_off_, spec_.fc_dim); }
  MatView out_weight() { return MatView(theta_.data() + ow_off_, spec_.output_dim(), spec_.fc_dim); }
  ConstMatView out_weight() const { return ConstMatView(theta_.data() + ow_off_, spec_.output_dim(), spec_.fc_dim); }
  VecView out_bias() { return VecView(theta_.data() + ob_off_, spec_.output_dim()); }
  ConstVecView out_bias() const { return ConstVecView(theta_.data() + ob_off_, spec_.output_dim()); }

  void init_params(uint64_t seed) {
    Rng rng(seed);
    auto fill = [&](MatView w, bool he) {
      const double fan_in = static_cast<double>(w.cols());
      const double limit =
          he ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + w.rows()));
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
    };
    for (int c = 0; c < spec_.conv_layers; ++c) {
      fill(conv_weight(c), true);
      conv_bias(c).setZero();
    }
    fill(fc_weight(), true);
    fc_bias().setZero();
    fill(out_weight(), false);
    out_bias().setZero();
  }

  Matrix forward_batched(const Matrix& x) const {
    Workspace ws;
    run_forward(x, ws);
    return std::move(ws.output);
  }

  // Row-independent forward (see HddaeModel::forward).
  Matrix forward(const Matrix& x) const {
    Matrix out(x.rows(), spec_.output_dim());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      out.row(r) = forward_batched(x.row(r));
    return out;
  }

  // Planar (channels x bins*N) post-activation maps of each conv layer for
  // one batch (testing hook).
  std::vector<Matrix> conv_trace(const Matrix& x) const {
    Workspace ws;
    run_forward(x, ws);
    return std::move(ws.conv_post);
  }

  double loss_and_grad(const Matrix& x, const Matrix& target, std::vector<double>& grad,
                       Vector* row_losses = nullptr) const {
    if (target.rows() != x.rows() || target.cols() != spec_.output_dim())
      throw DataError("cnn: target shape mismatch");
    Workspace ws;
    run_forward(x, ws);
    grad.assign(total_params_, 0.0);

    const Eigen::Index n = x.rows();
    const int bins = spec_.bins;
    const int T = spec_.conv_channels;
    const Matrix resid = ws.output - target;
    if (row_losses) *row_losses = resid.rowwise().squaredNorm();
    const double loss = resid.squaredNorm() / static_cast<double>(n);

    Matrix d = (2.0 / static_cast<double>(n)) * resid;
    d = d.array().rowwise() * out_norm_.stddev.transpose().array();

    MatView g_ow(grad.data() + ow_off_, spec_.output_dim(), spec_.fc_dim);
    VecView g_ob(grad.data() + ob_off_, spec_.output_dim());
    g_ow.noalias() = d.transpose() * ws.fc_post;
    g_ob = d.colwise().sum().transpose();

    Matrix dfc = (d * out_weight())
                     .cwiseProduct(activate_grad_mask(ws.fc_pre, spec_.activation));
    MatView g_fw(grad.data() + fcw_off_, spec_.fc_dim, T * bins);
    VecView g_fb(grad.data() + fcb_off_, spec_.fc_dim);
    g_fw.noalias() = dfc.transpose() * ws.flat;
    g_fb = dfc.colwise().sum().transpose();

    // Back to the planar layout of the last conv layer.
    Matrix dflat = dfc * fc_weight();  // N x T*bins
    Matrix dplanar(T, bins * n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (int c = 0; c < T; ++c)
        dplanar.block(c, r * bins, 1, bins) = dflat.block(r, c * bins, 1, bins);

    for (int layer = spec_.conv_layers - 1; layer >= 0; --layer) {
      const Matrix dpost =
          dplanar.cwiseProduct(activate_grad_mask(ws.conv_pre[layer], spec_.activation));
      MatView g_cw(grad.data() + cw_off_[layer], T, in_ch(layer) * spec_.kernel);
      VecView g_cb(grad.data() + cb_off_[layer], T);
      g_cw.noalias() = dpost * ws.im2col[layer].transpose();
      g_cb = dpost.rowwise().sum();
      if (layer > 0) {
        const Matrix dcols = conv_weight(layer).transpose() * dpost;  // in*k x bins*N
        dplanar = col2im(dcols, in_ch(layer), n);
      }
    }
    return loss;
  }

 private:
  struct Workspace {
    std::vector<Matrix> im2col;    // per conv layer: (in*k) x (bins*N)
    std::vector<Matrix> conv_pre;  // per conv layer: T x (bins*N)
    std::vector<Matrix> conv_post;
    Matrix flat;     // N x T*bins
    Matrix fc_pre;   // N x fc
    Matrix fc_post;
    Matrix output;   // N x bins
  };

  int in_ch(int layer) const { return layer == 0 ? spec_.in_channels : spec_.conv_channels; }

  // planar: channels x (bins*N) -> (channels*kernel) x (bins*N), zero padding
  // outside each frame's frequency range.
  Matrix build_im2col(const Matrix& planar, Eigen::Index n) const {
    const int bins = spec_.bins;
    const int k = spec_.kernel;
    const int half = k / 2;
    const int ch = static_cast<int>(planar.rows());
    Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(ch) * k, bins * n);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int c = 0; c < ch; ++c) {
        for (int t = 0; t < k; ++t) {
          const int shift = t - half;
          const int b_lo = std::max(0, -shift);
          const int b_hi = std::min(bins, bins - shift);
          if (b_hi <= b_lo) continue;
          cols.block(static_cast<Eigen::Index>(c) * k + t, r * bins + b_lo, 1, b_hi - b_lo) =
              planar.block(c, r * bins + b_lo + shift, 1, b_hi - b_lo);
        }
      }
    }
    return cols;
  }

  // Adjoint of build_im2col.
  Matrix col2im(const Matrix& cols, int ch, Eigen::Index n) const {
    const int bins = spec_.bins;
    const int k = spec_.kernel;
    const int half = k / 2;
    Matrix planar = Matrix::Zero(ch, bins * n);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int c = 0; c < ch; ++c) {
        for (int t = 0; t < k; ++t) {
          const int shift = t - half;
          const int b_lo = std::max(0, -shift);
          const int b_hi = std::min(bins, bins - shift);
          if (b_hi <= b_lo) continue;
          planar.block(c, r * bins + b_lo + shift, 1, b_hi - b_lo) +=
              cols.block(static_cast<Eigen::Index>(c) * k + t, r * bins + b_lo, 1, b_hi - b_lo);
        }
      }
    }
    return planar;
  }

  void run_forward(const Matrix& x, Workspace& ws) const {
    if (x.cols() != spec_.input_dim()) throw DataError("cnn: input dimension mismatch");
    in_norm_.validate(spec_.input_dim());
    out_norm_.validate(spec_.output_dim());
    const Eigen::Index n = x.rows();
    const int bins = spec_.bins;
    const int T = spec_.conv_channels;

    const Matrix xn = in_norm_.apply(x);
    Matrix planar(spec_.in_channels, bins * n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (int c = 0; c < spec_.in_channels; ++c)
        planar.block(c, r * bins, 1, bins) = xn.block(r, c * bins, 1, bins);

    ws.im2col.resize(spec_.conv_layers);
    ws.conv_pre.resize(spec_.conv_layers);
    ws.conv_post.resize(spec_.conv_layers);
    for (int layer = 0; layer < spec_.conv_layers; ++layer) {
      ws.im2col[layer] = build_im2col(planar, n);
      ws.conv_pre[layer] =
          (conv_weight(layer) * ws.im2col[layer]).colwise() + Vector(conv_bias(layer));
      ws.conv_post[layer] = activate(ws.conv_pre[layer], spec_.activation);
      planar = ws.conv_post[layer];
    }

    ws.flat.resize(n, static_cast<Eigen::Index>(T) * bins);
    for (Eigen::Index r = 0; r < n; ++r)
      for (int c = 0; c < T; ++c)
        ws.flat.block(r, c * bins, 1, bins) = planar.block(c, r * bins, 1, bins);

    ws.fc_pre = (ws.flat * fc_weight().transpose()).rowwise() + fc_bias().transpose();
    ws.fc_post = activate(ws.fc_pre, spec_.activation);
    Matrix out_n =
        (ws.fc_post * out_weight().transpose()).rowwise() + out_bias().transpose();
    ws.output = out_norm_.invert(out_n);
  }

  void build_layout() {
    size_t off = 0;
    cw_off_.clear();
    cb_off_.clear();
    for (int c = 0; c < spec_.conv_layers; ++c) {
      cw_off_.push_back(off);
      off += static_cast<size_t>(spec_.conv_channels) * in_ch(c) * spec_.kernel;
      cb_off_.push_back(off);
      off += spec_.conv_channels;
    }
    fcw_off_ = off;
    off += static_cast<size_t>(spec_.fc_dim) * spec_.conv_channels * spec_.bins;
    fcb_off_ = off;
    off += spec_.fc_dim;
    ow_off_ = off;
    off += static_cast<size_t>(spec_.output_dim()) * spec_.fc_dim;
    ob_off_ = off;
    off += spec_.output_dim();
    total_params_ = off;
  }

  FusionCnnSpec spec_;
  std::vector<double> theta_;
  std::vector<size_t> cw_off_, cb_off_;
  size_t fcw_off_ = 0, fcb_off_ = 0, ow_off_ = 0, ob_off_ = 0;
  size_t total_params_ = 0;
  Normalizer in_norm_, out_norm_;
};

}  // namespace drvk
