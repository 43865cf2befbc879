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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "drvk/ensemble.hpp"
#include "drvk/rng.hpp"

using namespace drvk;
namespace fs = std::filesystem;

namespace {

constexpr int kToyDim = 6;

// Toy conditions: clean rows y, "reverberant" inputs x = M_p y + c_p with a
// distinct random mixing map per condition.
struct ToyWorld {
  std::vector<Matrix> maps;
  std::vector<Vector> offsets;

  explicit ToyWorld(int conditions, uint64_t seed) {
    Rng rng(seed);
    for (int p = 0; p < conditions; ++p) {
      Matrix m = Matrix::Identity(kToyDim, kToyDim);
      for (int r = 0; r < kToyDim; ++r)
        for (int c = 0; c < kToyDim; ++c) m(r, c) += 0.4 * rng.normal();
      maps.push_back(m);
      Vector off(kToyDim);
      for (int r = 0; r < kToyDim; ++r) off(r) = 0.3 * rng.normal();
      offsets.push_back(off);
    }
  }

  FrameDataset make(int condition, int rows, uint64_t seed) const {
    Rng rng(seed);
    FrameDataset ds;
    ds.targets.resize(rows, kToyDim);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < kToyDim; ++c) ds.targets(r, c) = rng.uniform(-1.0, 1.0);
    ds.inputs = (ds.targets * maps[condition].transpose()).rowwise() +
                offsets[condition].transpose();
    return ds;
  }
};

HddaeSpec toy_arch() {
  HddaeSpec s;
  s.input_dim = kToyDim;
  s.hidden_dim = 24;
  s.output_dim = kToyDim;
  s.hidden_layers = 3;
  return s;
}

TrainConfig toy_train_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.minibatch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.seed = seed;
  cfg.validation_fraction = 0.1;
  cfg.patience = 0;  // run the full budget on the toy task
  return cfg;
}

Normalizer fit_norm(const Matrix& rows) {
  MomentStats st(static_cast<int>(rows.cols()));
  st.accumulate(rows);
  return st.to_normalizer();
}

double mse(const HddaeModel& m, const FrameDataset& ds) {
  return (m.forward_batched(ds.inputs) - ds.targets).squaredNorm() /
         static_cast<double>(ds.inputs.rows());
}

}  // namespace

TEST(EnsemblePrepare, SingleSubsetEqualsPlainTraining) {
  ToyWorld world(1, 7);
  const FrameDataset ds = world.make(0, 200, 8);
  const Normalizer in = fit_norm(ds.inputs), out = fit_norm(ds.targets);
  const TrainConfig cfg = toy_train_config(9);

  const auto models = ensemble_prepare({ds}, toy_arch(), cfg, {in}, {out});
  ASSERT_EQ(models.size(), 1u);

  HddaeModel manual(toy_arch());
  manual.input_norm() = in;
  manual.output_norm() = out;
  manual.init_params(cfg.seed);
  train(manual, ds.inputs, ds.targets, cfg);
  EXPECT_EQ(models[0].params(), manual.params());
}

TEST(EnsemblePrepare, SpecialistsBeatEachOtherOnTheirOwnConditions) {
  ToyWorld world(3, 17);
  std::vector<FrameDataset> subsets;
  std::vector<Normalizer> ins, outs;
  for (int p = 0; p < 3; ++p) {
    subsets.push_back(world.make(p, 400, 20 + p));
    ins.push_back(fit_norm(subsets.back().inputs));
    outs.push_back(fit_norm(subsets.back().targets));
  }
  const auto models = ensemble_prepare(subsets, toy_arch(), toy_train_config(23), ins, outs);
  ASSERT_EQ(models.size(), 3u);

  // Fresh evaluation sets per condition.
  for (int p = 0; p < 3; ++p) {
    const FrameDataset eval = world.make(p, 200, 90 + p);
    const double matched = mse(models[p], eval);
    for (int q = 0; q < 3; ++q) {
      if (q == p) continue;
      EXPECT_LT(matched, mse(models[q], eval))
          << "specialist " << q << " unexpectedly beats " << p << " on condition " << p;
    }
  }
}

TEST(EnsemblePrepare, RejectsEmptySubset) {
  ToyWorld world(1, 3);
  std::vector<FrameDataset> subsets{FrameDataset{}};
  std::vector<Normalizer> n{Normalizer::identity(kToyDim)};
  EXPECT_THROW(ensemble_prepare(subsets, toy_arch(), toy_train_config(1), n, n), DataError);
}

TEST(EnsembleInfer, EqualsIndependentForwardsStacked) {
  std::vector<HddaeModel> specialists;
  for (uint64_t s = 0; s < 2; ++s) {
    HddaeModel m(toy_arch());
    m.init_params(s + 40);
    specialists.push_back(std::move(m));
  }
  Rng rng(41);
  Matrix x(5, kToyDim);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < kToyDim; ++c) x(r, c) = rng.normal();

  const Matrix stacked = ensemble_infer(specialists, x);
  ASSERT_EQ(stacked.rows(), 5);
  ASSERT_EQ(stacked.cols(), 2 * kToyDim);
  for (size_t p = 0; p < specialists.size(); ++p) {
    const Matrix alone = specialists[p].forward(x);
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < kToyDim; ++c)
        EXPECT_EQ(stacked(r, p * kToyDim + c), alone(r, c));
  }
}

TEST(EnsembleInfer, IdenticalSpecialistsGiveIdenticalChannels) {
  HddaeModel m(toy_arch());
  m.init_params(44);
  std::vector<HddaeModel> specialists{m, m, m};
  Rng rng(45);
  Matrix x(3, kToyDim);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < kToyDim; ++c) x(r, c) = rng.normal();
  const Matrix stacked = ensemble_infer(specialists, x);
  for (int p = 1; p < 3; ++p)
    EXPECT_TRUE(stacked.middleCols(p * kToyDim, kToyDim)
                    .isApprox(stacked.middleCols(0, kToyDim), 0.0));
}

TEST(TrainFusion, SpecialistCheckpointsAreByteIdenticalAfterTraining) {
  ToyWorld world(2, 50);
  std::vector<HddaeModel> specialists;
  for (uint64_t s = 0; s < 2; ++s) {
    HddaeModel m(toy_arch());
    m.init_params(s + 51);
    specialists.push_back(std::move(m));
  }
  const auto tmp = fs::temp_directory_path();
  std::vector<std::string> before;
  for (size_t p = 0; p < 2; ++p) {
    const std::string path = (tmp / ("drvk_frozen_" + std::to_string(p) + ".ckpt")).string();
    save_checkpoint(specialists[p], path);
    std::ifstream f(path, std::ios::binary);
    before.emplace_back((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  }

  FrameDataset all = world.make(0, 120, 52);
  const FrameDataset second = world.make(1, 120, 53);
  all.inputs.conservativeResize(240, kToyDim);
  all.targets.conservativeResize(240, kToyDim);
  all.inputs.bottomRows(120) = second.inputs;
  all.targets.bottomRows(120) = second.targets;

  FusionCnnSpec cnn;
  cnn.in_channels = 2;
  cnn.bins = kToyDim;
  cnn.conv_layers = 1;
  cnn.conv_channels = 3;
  cnn.kernel = 3;
  cnn.fc_dim = 8;
  TrainConfig cfg = toy_train_config(54);
  cfg.epochs = 30;
  train_fusion(specialists, all, cnn, cfg);

  for (size_t p = 0; p < 2; ++p) {
    const std::string path = (tmp / ("drvk_frozen_" + std::to_string(p) + "_after.ckpt")).string();
    save_checkpoint(specialists[p], path);
    std::ifstream f(path, std::ios::binary);
    const std::string after((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    EXPECT_EQ(before[p], after);
    fs::remove(path);
    fs::remove(tmp / ("drvk_frozen_" + std::to_string(p) + ".ckpt"));
  }
}

TEST(TrainFusion, PerfectSpecialistsAreRecoverable) {
  // Hand-built exact identity specialists (linear activations): h1 = x,
  // layer L = concat(0, h1), output picks the second half.
  HddaeSpec spec;
  spec.input_dim = 4;
  spec.hidden_dim = 4;
  spec.output_dim = 4;
  spec.hidden_layers = 2;
  spec.activation = Activation::kIdentity;
  HddaeModel perfect(spec);
  perfect.weight(1) = Matrix::Identity(4, 4);
  perfect.weight(3).rightCols(4) = Matrix::Identity(4, 4);
  std::vector<HddaeModel> specialists{perfect, perfect};

  Rng rng(60);
  FrameDataset all;
  all.targets.resize(96, 4);
  for (int r = 0; r < 96; ++r)
    for (int c = 0; c < 4; ++c) all.targets(r, c) = rng.uniform(-1.0, 1.0);
  all.inputs = all.targets;  // identity "reverb": specialists are exact

  const double specialist_loss =
      (specialists[0].forward_batched(all.inputs) - all.targets).squaredNorm() / 96.0;
  ASSERT_LT(specialist_loss, 1e-24);

  FusionCnnSpec cnn;
  cnn.in_channels = 2;
  cnn.bins = 4;
  cnn.conv_layers = 1;
  cnn.conv_channels = 2;
  cnn.kernel = 1;
  cnn.fc_dim = 8;
  cnn.activation = Activation::kIdentity;
  TrainConfig cfg;
  cfg.epochs = 4000;
  cfg.minibatch_size = 96;
  cfg.learning_rate = 1e-2;
  cfg.seed = 61;
  cfg.validation_fraction = 0.0;
  TrainHistory hist;
  train_fusion(specialists, all, cnn, cfg, &hist);
  EXPECT_LE(hist.final_loss, specialist_loss + 1e-6);
}

TEST(TrainFusion, FusionBeatsEverySingleSpecialistAcrossConditions) {
  ToyWorld world(3, 70);
  std::vector<FrameDataset> subsets;
  std::vector<Normalizer> ins, outs;
  for (int p = 0; p < 3; ++p) {
    subsets.push_back(world.make(p, 400, 71 + p));
    ins.push_back(fit_norm(subsets.back().inputs));
    outs.push_back(fit_norm(subsets.back().targets));
  }
  const auto specialists =
      ensemble_prepare(subsets, toy_arch(), toy_train_config(75), ins, outs);

  FrameDataset all;
  all.inputs.resize(1200, kToyDim);
  all.targets.resize(1200, kToyDim);
  for (int p = 0; p < 3; ++p) {
    all.inputs.middleRows(400 * p, 400) = subsets[p].inputs;
    all.targets.middleRows(400 * p, 400) = subsets[p].targets;
  }

  FusionCnnSpec cnn;
  cnn.in_channels = 3;
  cnn.bins = kToyDim;
  cnn.conv_layers = 2;
  cnn.conv_channels = 4;
  cnn.kernel = 3;
  cnn.fc_dim = 24;
  TrainConfig cfg = toy_train_config(76);
  cfg.epochs = 200;
  const FusionCnnModel fusion = train_fusion(specialists, all, cnn, cfg);

  const Matrix fused = fusion.forward_batched(ensemble_infer(specialists, all.inputs));
  const double fusion_mse = (fused - all.targets).squaredNorm() / 1200.0;
  for (int p = 0; p < 3; ++p) {
    const double single =
        (specialists[p].forward_batched(all.inputs) - all.targets).squaredNorm() / 1200.0;
    EXPECT_LE(fusion_mse, single) << "specialist " << p;
  }
}

TEST(IdeaModel, ChannelPermutationWithPermutedFusionIsInvariant) {
  std::vector<HddaeModel> specialists;
  for (uint64_t s = 0; s < 3; ++s) {
    HddaeModel m(toy_arch());
    m.init_params(80 + s);
    specialists.push_back(std::move(m));
  }
  FusionCnnSpec cnn;
  cnn.in_channels = 3;
  cnn.bins = kToyDim;
  cnn.conv_layers = 2;
  cnn.conv_channels = 4;
  cnn.kernel = 3;
  cnn.fc_dim = 8;
  FusionCnnModel fusion(cnn);
  fusion.init_params(84);

  const int perm[3] = {2, 0, 1};
  std::vector<HddaeModel> permuted;
  for (int p = 0; p < 3; ++p) permuted.push_back(specialists[perm[p]]);
  FusionCnnModel fusion_perm = fusion;
  for (int p = 0; p < 3; ++p) {
    fusion_perm.conv_weight(0).middleCols(p * cnn.kernel, cnn.kernel) =
        fusion.conv_weight(0).middleCols(perm[p] * cnn.kernel, cnn.kernel);
    fusion_perm.input_norm().mean.segment(p * kToyDim, kToyDim) =
        fusion.input_norm().mean.segment(perm[p] * kToyDim, kToyDim);
    fusion_perm.input_norm().stddev.segment(p * kToyDim, kToyDim) =
        fusion.input_norm().stddev.segment(perm[p] * kToyDim, kToyDim);
  }

  Rng rng(85);
  Matrix x(4, kToyDim);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < kToyDim; ++c) x(r, c) = rng.normal();
  const Matrix a = fusion.forward(ensemble_infer(specialists, x));
  const Matrix b = fusion_perm.forward(ensemble_infer(permuted, x));
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dereverb, LengthContracts) {
  const AnalysisConfig cfg;
  HddaeSpec spec;
  spec.input_dim = cfg.spliced_dim();
  spec.hidden_dim = 8;
  spec.output_dim = cfg.bins();
  spec.hidden_layers = 3;
  HddaeModel single(spec);
  single.init_params(90);

  IdeaModel idea;
  idea.analysis = cfg;
  idea.specialists = {single, single};
  idea.specialist_conditions = {0.3, 0.6};
  FusionCnnSpec cnn;
  cnn.in_channels = 2;
  cnn.bins = cfg.bins();
  cnn.conv_layers = 1;
  cnn.conv_channels = 2;
  cnn.kernel = 3;
  cnn.fc_dim = 8;
  idea.fusion = FusionCnnModel(cnn);
  idea.fusion.init_params(91);

  Rng rng(92);
  Waveform y;
  y.samples.resize(9100);
  for (auto& s : y.samples) s = 0.2 * rng.normal();
  EXPECT_EQ(single_dereverb(single, cfg, y).size(), y.size());
  EXPECT_EQ(idea_dereverb(idea, y).size(), y.size());
}

TEST(IdeaModel, ManifestRoundTrip) {
  const auto dir = fs::temp_directory_path() / "drvk_idea_roundtrip";
  fs::remove_all(dir);

  IdeaModel idea;
  idea.analysis.frame_len = 64;
  idea.analysis.fft_size = 64;
  idea.analysis.hop = 32;
  idea.analysis.context_radius = 1;
  idea.config_hash = "cafebabe";
  HddaeSpec spec;
  spec.input_dim = 33 * 3;
  spec.hidden_dim = 8;
  spec.output_dim = 33;
  spec.hidden_layers = 3;
  for (uint64_t s = 0; s < 2; ++s) {
    HddaeModel m(spec);
    m.init_params(95 + s);
    idea.specialists.push_back(std::move(m));
    idea.specialist_conditions.push_back(0.3 * (s + 1));
  }
  FusionCnnSpec cnn;
  cnn.in_channels = 2;
  cnn.bins = 33;
  cnn.conv_layers = 1;
  cnn.conv_channels = 2;
  cnn.kernel = 3;
  cnn.fc_dim = 8;
  idea.fusion = FusionCnnModel(cnn);
  idea.fusion.init_params(97);

  save_idea_model(idea, dir.string());
  const IdeaModel loaded = load_idea_model((dir / "idea.json").string());
  EXPECT_EQ(loaded.specialists.size(), 2u);
  EXPECT_EQ(loaded.config_hash, "cafebabe");
  EXPECT_EQ(loaded.specialist_conditions, idea.specialist_conditions);
  EXPECT_EQ(loaded.fusion.params(), idea.fusion.params());
  for (size_t p = 0; p < 2; ++p)
    EXPECT_EQ(loaded.specialists[p].params(), idea.specialists[p].params());
  EXPECT_EQ(loaded.analysis.frame_len, 64);
  fs::remove_all(dir);
}
