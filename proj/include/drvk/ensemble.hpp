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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drvk/checkpoint.hpp"
#include "drvk/cnn.hpp"
#include "drvk/common.hpp"
#include "drvk/dsp.hpp"
#include "drvk/nn.hpp"
#include "drvk/train.hpp"

namespace drvk {

// One clean/reverb feature set: spliced LPS inputs against clean LPS targets.
struct FrameDataset {
  Matrix inputs;   // rows x D
  Matrix targets;  // rows x B
};

// The ensemble model: P condition specialists plus the fusion network that
// integrates their stacked outputs. Specialist order is fixed (ascending
// condition value) and recorded alongside the models.
struct IdeaModel {
  std::vector<HddaeModel> specialists;
  std::vector<double> specialist_conditions;  // e.g. T60 per specialist
  FusionCnnModel fusion;
  AnalysisConfig analysis;
  std::string config_hash;
};

// EP stage: one specialist per condition subset. Specialist p trains with
// seed cfg.seed + p, so a single-subset call is bit-identical to train().
inline std::vector<HddaeModel> ensemble_prepare(const std::vector<FrameDataset>& subsets,
                                                const HddaeSpec& arch,
                                                const TrainConfig& cfg,
                                                const std::vector<Normalizer>& input_norms,
                                                const std::vector<Normalizer>& output_norms,
                                                std::vector<TrainHistory>* histories = nullptr) {
  if (subsets.empty()) throw DataError("ensemble_prepare: no condition subsets");
  if (input_norms.size() != subsets.size() || output_norms.size() != subsets.size())
    throw DataError("ensemble_prepare: normalizer count mismatch");
  std::vector<HddaeModel> models;
  models.reserve(subsets.size());
  for (size_t p = 0; p < subsets.size(); ++p) {
    if (subsets[p].inputs.rows() == 0)
      throw DataError("ensemble_prepare: empty condition subset " + std::to_string(p));
    HddaeModel model(arch);
    model.input_norm() = input_norms[p];
    model.output_norm() = output_norms[p];
    model.init_params(cfg.seed + p);
    TrainConfig sub_cfg = cfg;
    sub_cfg.seed = cfg.seed + p;
    TrainHistory h = train(model, subsets[p].inputs, subsets[p].targets, sub_cfg);
    if (histories) histories->push_back(h);
    models.push_back(std::move(model));
  }
  return models;
}

// Per-frame stacked specialist outputs [N_1; ...; N_P], channel-major rows
// (frames x P*B). Uses the row-independent forward, so the result is exactly
// P independent forward passes.
inline Matrix ensemble_infer(const std::vector<HddaeModel>& specialists,
                             const Matrix& spliced) {
  if (specialists.empty()) throw DataError("ensemble_infer: no specialists");
  const int bins = specialists.front().spec().output_dim;
  for (const auto& m : specialists)
    if (m.spec().output_dim != bins || m.spec().input_dim != spliced.cols())
      throw DataError("ensemble_infer: inconsistent specialist dimensions");
  Matrix stacked(spliced.rows(), static_cast<Eigen::Index>(specialists.size()) * bins);
  for (size_t p = 0; p < specialists.size(); ++p)
    stacked.middleCols(static_cast<Eigen::Index>(p) * bins, bins) =
        specialists[p].forward(spliced);
  return stacked;
}

// EI stage: train the fusion CNN on stacked specialist outputs against the
// clean targets. Specialists are frozen; only the CNN parameters move.
inline FusionCnnModel train_fusion(const std::vector<HddaeModel>& specialists,
                                   const FrameDataset& all_conditions,
                                   const FusionCnnSpec& arch, const TrainConfig& cfg,
                                   TrainHistory* history = nullptr) {
  const Matrix stacked = ensemble_infer(specialists, all_conditions.inputs);

  FusionCnnModel fusion(arch);
  MomentStats in_stats(static_cast<int>(stacked.cols()));
  in_stats.accumulate(stacked);
  fusion.input_norm() = in_stats.to_normalizer();
  MomentStats out_stats(static_cast<int>(all_conditions.targets.cols()));
  out_stats.accumulate(all_conditions.targets);
  fusion.output_norm() = out_stats.to_normalizer();

  fusion.init_params(cfg.seed);
  TrainHistory h = train(fusion, stacked, all_conditions.targets, cfg);
  if (history) *history = h;
  return fusion;
}

// Online path of the ensemble: specialists in parallel, fusion on top,
// wrapped in the spectral-mapping pipeline.
inline Waveform idea_dereverb(const IdeaModel& model, const Waveform& y) {
  if (model.specialists.empty()) throw DataError("idea_dereverb: model has no specialists");
  const auto mapper = [&model](const Matrix& spliced) {
    return model.fusion.forward(ensemble_infer(model.specialists, spliced));
  };
  return dereverb_pipeline(y, mapper, model.analysis);
}

// Single-model baseline path.
inline Waveform single_dereverb(const HddaeModel& model, const AnalysisConfig& cfg,
                                const Waveform& y) {
  const auto mapper = [&model](const Matrix& spliced) { return model.forward(spliced); };
  return dereverb_pipeline(y, mapper, cfg);
}

// --- IdeaModel persistence: a JSON manifest referencing the specialist and
// fusion checkpoints (paths relative to the manifest). ---

inline void save_idea_model(const IdeaModel& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["format"] = "drvk-idea";
  j["version"] = 1;
  j["config_hash"] = model.config_hash;
  j["analysis"] = {{"frame_len", model.analysis.frame_len},
                   {"hop", model.analysis.hop},
                   {"fft_size", model.analysis.fft_size},
                   {"context_radius", model.analysis.context_radius},
                   {"log_floor", model.analysis.log_floor}};
  j["specialists"] = nlohmann::json::array();
  for (size_t p = 0; p < model.specialists.size(); ++p) {
    char name[64];
    std::snprintf(name, sizeof(name), "specialist_%zu.ckpt", p);
    save_checkpoint(model.specialists[p], (fs::path(dir) / name).string());
    j["specialists"].push_back(
        {{"file", name}, {"condition", model.specialist_conditions[p]}});
  }
  save_checkpoint(model.fusion, (fs::path(dir) / "fusion.ckpt").string());
  j["fusion"] = "fusion.ckpt";
  std::ofstream f(fs::path(dir) / "idea.json");
  if (!f) throw DataError("cannot write ensemble manifest in " + dir);
  f << j.dump(2) << "\n";
}

inline IdeaModel load_idea_model(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream f(manifest_path);
  if (!f) throw DataError("cannot open ensemble manifest: " + manifest_path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed ensemble manifest: " + std::string(e.what()));
  }
  if (j.value("format", "") != "drvk-idea" || j.value("version", 0) != 1)
    throw DataError("unsupported ensemble manifest: " + manifest_path);

  IdeaModel model;
  const fs::path dir = fs::path(manifest_path).parent_path();
  model.config_hash = j.value("config_hash", "");
  const auto& a = j.at("analysis");
  model.analysis.frame_len = a.at("frame_len").get<int>();
  model.analysis.hop = a.at("hop").get<int>();
  model.analysis.fft_size = a.at("fft_size").get<int>();
  model.analysis.context_radius = a.at("context_radius").get<int>();
  model.analysis.log_floor = a.at("log_floor").get<double>();
  for (const auto& s : j.at("specialists")) {
    model.specialists.push_back(
        load_hddae_checkpoint((dir / s.at("file").get<std::string>()).string()));
    model.specialist_conditions.push_back(s.at("condition").get<double>());
  }
  model.fusion = load_cnn_checkpoint((dir / j.at("fusion").get<std::string>()).string());
  if (model.specialists.empty()) throw DataError("ensemble manifest lists no specialists");
  return model;
}

}  // namespace drvk
