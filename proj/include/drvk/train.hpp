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

#include <limits>
#include <string>
#include <vector>

#include "drvk/common.hpp"
#include "drvk/rng.hpp"

namespace drvk {

struct TrainConfig {
  int epochs = 100;
  int minibatch_size = 128;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  bool shuffle = true;
  double validation_fraction = 0.1;
  int patience = 10;  // early-stopping patience on validation loss; 0 disables

  void validate() const {
    if (epochs <= 0) throw DataError("train config: epochs must be positive");
    if (minibatch_size <= 0) throw DataError("train config: minibatch size must be positive");
    if (learning_rate < 0.0) throw DataError("train config: negative learning rate");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
      throw DataError("train config: validation fraction must be in [0, 1)");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
      throw DataError("train config: Adam betas must be in [0, 1)");
  }
};

struct TrainHistory {
  std::vector<double> train_loss;  // per-epoch mean over all training frames
  std::vector<double> val_loss;    // empty when validation_fraction == 0
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based; 0 when no validation was used
  double final_loss = 0.0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(size_t n, const TrainConfig& cfg)
      : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& grad) {
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, t_);
    const double corr2 = 1.0 - std::pow(b2, t_);
    for (size_t i = 0; i < theta.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      theta[i] -= cfg_.learning_rate * (m_[i] / corr1) /
                  (std::sqrt(v_[i] / corr2) + cfg_.adam_eps);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

// Minibatch Adam over (input row, target row) pairs. Deterministic for a
// fixed seed: the validation split, the per-epoch shuffles and every
// reduction use fixed orders. The recorded per-epoch training loss is
// accumulated in original-row order, so it is invariant to the shuffle.
//
// With validation enabled, training stops once the validation loss has not
// improved for `patience` epochs and the best-validation parameters are
// restored.
template <class Model>
TrainHistory train(Model& model, const Matrix& inputs, const Matrix& targets,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.rows() == 0) throw DataError("train: empty dataset");
  if (inputs.rows() != targets.rows()) throw DataError("train: input/target row mismatch");

  const Eigen::Index total = inputs.rows();
  Rng split_rng(derive_seed(cfg.seed, "validation-split"));
  std::vector<Eigen::Index> order(total);
  for (Eigen::Index i = 0; i < total; ++i) order[i] = i;
  split_rng.shuffle(order);

  const Eigen::Index n_val =
      std::min<Eigen::Index>(static_cast<Eigen::Index>(cfg.validation_fraction * total),
                             total - 1);
  std::vector<Eigen::Index> val_idx(order.begin(), order.begin() + n_val);
  std::vector<Eigen::Index> train_idx(order.begin() + n_val, order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const Eigen::Index n_train = static_cast<Eigen::Index>(train_idx.size());

  auto gather = [&](const std::vector<Eigen::Index>& idx, Eigen::Index lo, Eigen::Index hi,
                    const Matrix& src, Matrix& dst) {
    dst.resize(hi - lo, src.cols());
    for (Eigen::Index i = lo; i < hi; ++i) dst.row(i - lo) = src.row(idx[i]);
  };

  Matrix val_x, val_y;
  gather(val_idx, 0, n_val, inputs, val_x);
  gather(val_idx, 0, n_val, targets, val_y);

  AdamOptimizer opt(model.param_count(), cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle"));
  std::vector<double> grad;
  const std::vector<Eigen::Index> train_idx_sorted = train_idx;
  std::vector<double> row_loss_by_index(static_cast<size_t>(total), 0.0);

  TrainHistory hist;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta;
  int since_best = 0;

  Matrix bx, by;
  Vector row_losses;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle_rng.shuffle(train_idx);
    for (Eigen::Index start = 0; start < n_train; start += cfg.minibatch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(start + cfg.minibatch_size, n_train);
      gather(train_idx, start, stop, inputs, bx);
      gather(train_idx, start, stop, targets, by);
      const double batch_loss = model.loss_and_grad(bx, by, grad, &row_losses);
      if (!std::isfinite(batch_loss))
        throw NumericError("train: loss became non-finite at epoch " + std::to_string(epoch));
      for (Eigen::Index i = start; i < stop; ++i)
        row_loss_by_index[static_cast<size_t>(train_idx[i])] = row_losses(i - start);
      opt.step(model.params(), grad);
    }
    // Canonical-order reduction keeps the history invariant to shuffling.
    double epoch_loss = 0.0;
    for (Eigen::Index idx : train_idx_sorted)
      epoch_loss += row_loss_by_index[static_cast<size_t>(idx)];
    hist.train_loss.push_back(epoch_loss / static_cast<double>(n_train));
    hist.epochs_run = epoch;

    if (n_val > 0) {
      const Matrix val_out = model.forward_batched(val_x);
      const double vloss = (val_out - val_y).squaredNorm() / static_cast<double>(n_val);
      if (!std::isfinite(vloss))
        throw NumericError("train: validation loss became non-finite at epoch " +
                           std::to_string(epoch));
      hist.val_loss.push_back(vloss);
      if (vloss < best_val) {
        best_val = vloss;
        best_theta = model.params();
        hist.best_epoch = epoch;
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        break;
      }
    }
  }

  if (!best_theta.empty()) model.params() = best_theta;
  hist.final_loss = hist.train_loss.back();
  return hist;
}

}  // namespace drvk
