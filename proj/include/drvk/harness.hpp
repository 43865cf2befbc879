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

#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <variant>

#include "drvk/checkpoint.hpp"
#include "drvk/ensemble.hpp"
#include "drvk/experiment.hpp"
#include "drvk/metrics.hpp"

namespace drvk {

// --- Model roster ---
//
// Identifiers follow the experiment naming scheme:
//   HDDAE_A(3), HDDAE_A(6)   single models trained on every condition
//   HDDAE_<t60>(3)           per-condition specialists, e.g. HDDAE_0.3(3)
//   IDEA_A(6)                three specialists (3 hidden layers each) plus
//                            the fusion CNN
struct ModelId {
  enum class Kind { kHddaeAll, kHddaeSpecialist, kIdea };
  Kind kind = Kind::kHddaeAll;
  double t60 = 0.0;  // specialist condition
  int layers = 3;
  std::string raw;

  static ModelId parse(const std::string& s) {
    ModelId id;
    id.raw = s;
    const auto open = s.find('(');
    const auto close = s.find(')', open);
    if (open == std::string::npos || close == std::string::npos || close != s.size() - 1)
      throw UsageError("unknown model id (expected e.g. 'HDDAE_A(3)'): " + s);
    const std::string head = s.substr(0, open);
    const std::string depth = s.substr(open + 1, close - open - 1);
    try {
      id.layers = std::stoi(depth);
    } catch (const std::exception&) {
      throw UsageError("bad layer count in model id: " + s);
    }
    if (head == "IDEA_A") {
      id.kind = Kind::kIdea;
    } else if (head == "HDDAE_A") {
      id.kind = Kind::kHddaeAll;
    } else if (head.rfind("HDDAE_", 0) == 0) {
      id.kind = Kind::kHddaeSpecialist;
      try {
        id.t60 = std::stod(head.substr(6));
      } catch (const std::exception&) {
        throw UsageError("bad T60 in model id: " + s);
      }
    } else {
      throw UsageError("unknown model id: " + s);
    }
    return id;
  }

  // File-system-safe artifact name.
  std::string artifact_name() const {
    switch (kind) {
      case Kind::kHddaeAll:
        return "hddae_a_" + std::to_string(layers);
      case Kind::kHddaeSpecialist:
        return "hddae_t" + detail::t60_tag(t60) + "_" + std::to_string(layers);
      case Kind::kIdea:
        return "idea_a_" + std::to_string(layers);
    }
    return "model";
  }
};

inline std::vector<std::string> default_roster(const ExperimentConfig& cfg) {
  std::vector<std::string> ids;
  for (double t : cfg.sorted_train_t60())
    ids.push_back("HDDAE_" + detail::t60_tag(t) + "(" + std::to_string(cfg.specialist_layers) + ")");
  ids.push_back("HDDAE_A(" + std::to_string(cfg.specialist_layers) + ")");
  ids.push_back("HDDAE_A(" + std::to_string(cfg.deep_layers) + ")");
  ids.push_back("IDEA_A(" + std::to_string(cfg.deep_layers) + ")");
  return ids;
}

// --- Feature loading ---

namespace detail {

inline FrameDataset load_dataset(const ExperimentConfig& cfg, const DatasetManifest& manifest,
                                 std::optional<double> t60_filter) {
  std::vector<Matrix> xs, ys;
  Eigen::Index rows = 0;
  for (const auto& e : manifest.entries) {
    if (e.split != "train") continue;
    if (t60_filter && std::abs(e.t60 - *t60_filter) > 1e-9) continue;
    Matrix reverb = read_feature_matrix((fs::path(cfg.out_dir) / e.reverb_feat).string());
    Matrix clean = read_feature_matrix((fs::path(cfg.out_dir) / e.clean_feat).string());
    if (reverb.rows() != clean.rows())
      throw DataError("feature frame mismatch for " + e.id);
    xs.push_back(splice(reverb, cfg.analysis.context_radius));
    ys.push_back(std::move(clean));
    rows += xs.back().rows();
  }
  if (rows == 0)
    throw DataError("no training features found" +
                    std::string(t60_filter ? " for requested condition" : ""));
  FrameDataset ds;
  ds.inputs.resize(rows, xs.front().cols());
  ds.targets.resize(rows, ys.front().cols());
  Eigen::Index at = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    ds.inputs.middleRows(at, xs[i].rows()) = xs[i];
    ds.targets.middleRows(at, ys[i].rows()) = ys[i];
    at += xs[i].rows();
  }
  return ds;
}

inline ConditionStats load_condition_stats(const ExperimentConfig& cfg, double t60) {
  return ConditionStats::load(
      (fs::path(cfg.out_dir) / "stats" / ("cond_" + t60_tag(t60) + ".stats")).string());
}

inline ConditionStats merged_stats(const ExperimentConfig& cfg) {
  ConditionStats all;
  for (double t : cfg.sorted_train_t60()) {
    const ConditionStats cs = load_condition_stats(cfg, t);
    all.input.merge(cs.input);
    all.output.merge(cs.output);
  }
  return all;
}

inline void write_loss_history(const std::string& path, const TrainHistory& hist) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write loss history: " + path);
  f << "epoch,train_loss,val_loss\n";
  char buf[128];
  for (size_t i = 0; i < hist.train_loss.size(); ++i) {
    const double val = i < hist.val_loss.size() ? hist.val_loss[i] : 0.0;
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g\n", i + 1, hist.train_loss[i], val);
    f << buf;
  }
}

inline uint64_t specialist_seed(const ExperimentConfig& cfg, double t60) {
  const auto grid = cfg.sorted_train_t60();
  for (size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i] - t60) < 1e-9) return cfg.seed + 100 + i;
  throw UsageError("model condition T60=" + t60_tag(t60) + " is not in the training grid");
}

}  // namespace detail

// Trains one roster model against a prepared dataset; writes checkpoint(s)
// and a loss-history CSV under <out_dir>/models. Returns the primary
// artifact path (checkpoint, or the ensemble manifest for IDEA).
//
// Seeds are derived per model so that artifacts are independent of training
// order, and so that the specialists inside IDEA are bit-identical to the
// standalone HDDAE_<t60> models (IDEA reuses their checkpoints when present).
inline std::string train_model(const ExperimentConfig& cfg, const std::string& model_id_str) {
  cfg.validate();
  const ModelId id = ModelId::parse(model_id_str);
  const DatasetManifest manifest =
      DatasetManifest::load((fs::path(cfg.out_dir) / "manifest.json").string());
  const fs::path models_dir = fs::path(cfg.out_dir) / "models";
  fs::create_directories(models_dir);

  const HddaeSpec base_spec{cfg.analysis.spliced_dim(), cfg.hidden_dim, cfg.analysis.bins(),
                            cfg.specialist_layers, Activation::kRelu};

  auto train_hddae = [&](const HddaeSpec& spec, std::optional<double> t60, uint64_t seed,
                         const std::string& name) {
    FrameDataset ds = detail::load_dataset(cfg, manifest, t60);
    const ConditionStats stats =
        t60 ? detail::load_condition_stats(cfg, *t60) : detail::merged_stats(cfg);
    HddaeModel model(spec);
    model.input_norm() = stats.input.to_normalizer();
    model.output_norm() = stats.output.to_normalizer();
    model.init_params(seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainHistory hist = train(model, ds.inputs, ds.targets, tc);
    const std::string path = (models_dir / (name + ".ckpt")).string();
    save_checkpoint(model, path, &hist);
    detail::write_loss_history((models_dir / (name + "_loss.csv")).string(), hist);
    return path;
  };

  switch (id.kind) {
    case ModelId::Kind::kHddaeSpecialist: {
      HddaeSpec spec = base_spec;
      spec.hidden_layers = id.layers;
      return train_hddae(spec, id.t60, detail::specialist_seed(cfg, id.t60),
                         id.artifact_name());
    }
    case ModelId::Kind::kHddaeAll: {
      HddaeSpec spec = base_spec;
      spec.hidden_layers = id.layers;
      return train_hddae(spec, std::nullopt, cfg.seed + 200 + id.layers, id.artifact_name());
    }
    case ModelId::Kind::kIdea: {
      // EP stage: per-condition specialists, reusing standalone checkpoints
      // when they already exist (identical seeds make this a pure cache).
      IdeaModel idea;
      idea.analysis = cfg.analysis;
      idea.config_hash = cfg.hash();
      for (double t : cfg.sorted_train_t60()) {
        ModelId spec_id;
        spec_id.kind = ModelId::Kind::kHddaeSpecialist;
        spec_id.t60 = t;
        spec_id.layers = cfg.specialist_layers;
        const std::string ckpt = (models_dir / (spec_id.artifact_name() + ".ckpt")).string();
        if (!fs::exists(ckpt))
          train_hddae(base_spec, t, detail::specialist_seed(cfg, t), spec_id.artifact_name());
        idea.specialists.push_back(load_hddae_checkpoint(ckpt));
        idea.specialist_conditions.push_back(t);
      }

      // EI stage: fusion CNN over the stacked specialist outputs, trained on
      // all conditions. Specialists stay frozen.
      FrameDataset all = detail::load_dataset(cfg, manifest, std::nullopt);
      FusionCnnSpec cnn_spec;
      cnn_spec.in_channels = static_cast<int>(idea.specialists.size());
      cnn_spec.bins = cfg.analysis.bins();
      cnn_spec.conv_layers = cfg.conv_layers;
      cnn_spec.conv_channels = cfg.conv_channels;
      cnn_spec.kernel = cfg.conv_kernel;
      cnn_spec.fc_dim = cfg.fc_dim;
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed + 400;
      TrainHistory hist;
      idea.fusion = train_fusion(idea.specialists, all, cnn_spec, tc, &hist);

      const fs::path idea_dir = models_dir / id.artifact_name();
      save_idea_model(idea, idea_dir.string());
      detail::write_loss_history((idea_dir / "fusion_loss.csv").string(), hist);
      return (idea_dir / "idea.json").string();
    }
  }
  throw UsageError("unhandled model id: " + model_id_str);
}

// --- Evaluation ---

struct EvalRow {
  std::string model;
  std::string utterance;
  double t60 = 0.0;
  bool matched = false;
  double stoi = 0.0;
  double sdi = 0.0;
  double lsd = 0.0;
};

struct EvalSummaryCell {
  int n = 0;
  double stoi = 0.0, sdi = 0.0, lsd = 0.0;
};

struct EvalReport {
  std::vector<std::string> models;  // row order
  std::vector<double> t60_grid;    // sorted test grid
  std::vector<EvalRow> rows;

  // Mean cell for (model, t60); t60 = NaN requests the overall mean.
  EvalSummaryCell mean(const std::string& model, std::optional<double> t60) const {
    EvalSummaryCell c;
    for (const auto& r : rows) {
      if (r.model != model) continue;
      if (t60 && std::abs(r.t60 - *t60) > 1e-9) continue;
      c.stoi += r.stoi;
      c.sdi += r.sdi;
      c.lsd += r.lsd;
      ++c.n;
    }
    if (c.n > 0) {
      c.stoi /= c.n;
      c.sdi /= c.n;
      c.lsd /= c.n;
    }
    return c;
  }
};

using LoadedModel = std::variant<HddaeModel, IdeaModel>;

inline LoadedModel load_model_artifact(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
    return load_idea_model(path);
  const ModelKind kind = peek_checkpoint_kind(path);
  if (kind == ModelKind::kHddae) return load_hddae_checkpoint(path);
  throw DataError("a fusion checkpoint cannot dereverberate alone; pass the idea.json manifest");
}

inline Waveform run_model(const LoadedModel& model, const AnalysisConfig& cfg,
                          const Waveform& y) {
  if (std::holds_alternative<HddaeModel>(model))
    return single_dereverb(std::get<HddaeModel>(model), cfg, y);
  return idea_dereverb(std::get<IdeaModel>(model), y);
}

// Evaluates the requested models plus the unprocessed-reverberation baseline
// and a clean-vs-clean control row over the prepared test set. Writes
// per-utterance and summary CSVs plus an aligned text table under
// <out_dir>/eval.
inline EvalReport evaluate(const ExperimentConfig& cfg, std::vector<std::string> model_ids) {
  cfg.validate();
  const DatasetManifest manifest =
      DatasetManifest::load((fs::path(cfg.out_dir) / "manifest.json").string());
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "eval");

  if (model_ids.empty()) model_ids = default_roster(cfg);

  EvalReport report;
  report.t60_grid = cfg.sorted_test_t60();
  report.models.push_back("Reverberation");
  std::map<std::string, LoadedModel> loaded;
  for (const auto& mid : model_ids) {
    const ModelId id = ModelId::parse(mid);
    const fs::path models_dir = out / "models";
    const std::string path =
        id.kind == ModelId::Kind::kIdea
            ? (models_dir / id.artifact_name() / "idea.json").string()
            : (models_dir / (id.artifact_name() + ".ckpt")).string();
    if (!fs::exists(path))
      throw DataError("missing trained artifact for " + mid + " (expected " + path + ")");
    loaded.emplace(mid, load_model_artifact(path));
    report.models.push_back(mid);
  }
  report.models.push_back("Clean");

  std::vector<const UtteranceRecord*> test_entries;
  for (const auto& e : manifest.entries)
    if (e.split == "test") test_entries.push_back(&e);
  if (test_entries.empty()) throw DataError("manifest has no test entries");
  std::sort(test_entries.begin(), test_entries.end(),
            [](const UtteranceRecord* a, const UtteranceRecord* b) {
              return a->t60 != b->t60 ? a->t60 < b->t60 : a->id < b->id;
            });

  for (const UtteranceRecord* e : test_entries) {
    const Waveform clean = read_wav(e->clean_wav);
    const Waveform reverb = read_wav((out / e->reverb_wav).string());
    for (const auto& model_name : report.models) {
      Waveform processed;
      if (model_name == "Reverberation") processed = reverb;
      else if (model_name == "Clean") processed = clean;
      else processed = run_model(loaded.at(model_name), manifest.analysis, reverb);

      auto [c2, p2] = align_trim(clean, processed);
      EvalRow row;
      row.model = model_name;
      row.utterance = e->id;
      row.t60 = e->t60;
      row.matched = cfg.is_train_t60(e->t60);
      row.stoi = stoi(c2, p2);
      row.sdi = sdi(c2, p2);
      row.lsd = lsd(c2, p2, manifest.analysis);
      report.rows.push_back(row);
    }
  }

  // Per-utterance CSV.
  {
    std::ofstream f(out / "eval" / "per_utterance.csv");
    if (!f) throw DataError("cannot write per-utterance CSV");
    f << "model,utterance,t60,matched,stoi,sdi,lsd\n";
    char buf[256];
    for (const auto& model_name : report.models)
      for (const auto& r : report.rows) {
        if (r.model != model_name) continue;
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,%.6f,%.6f,%.6f\n", r.model.c_str(),
                      r.utterance.c_str(), detail::t60_tag(r.t60).c_str(), r.matched ? 1 : 0,
                      r.stoi, r.sdi, r.lsd);
        f << buf;
      }
  }

  // Summary CSV: per (model, T60) means plus an overall row per model.
  {
    std::ofstream f(out / "eval" / "summary.csv");
    if (!f) throw DataError("cannot write summary CSV");
    f << "model,t60,n,stoi,sdi,lsd\n";
    char buf[256];
    for (const auto& model_name : report.models) {
      for (double t : report.t60_grid) {
        const auto c = report.mean(model_name, t);
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f\n", model_name.c_str(),
                      detail::t60_tag(t).c_str(), c.n, c.stoi, c.sdi, c.lsd);
        f << buf;
      }
      const auto c = report.mean(model_name, std::nullopt);
      std::snprintf(buf, sizeof(buf), "%s,Avg,%d,%.6f,%.6f,%.6f\n", model_name.c_str(), c.n,
                    c.stoi, c.sdi, c.lsd);
      f << buf;
    }
  }

  // Plain-text table split into matched/mismatched column groups.
  {
    std::ofstream f(out / "eval" / "table.txt");
    if (!f) throw DataError("cannot write table");
    std::vector<double> matched_cols, mismatched_cols;
    for (double t : report.t60_grid)
      (cfg.is_train_t60(t) ? matched_cols : mismatched_cols).push_back(t);

    auto metric_of = [](const EvalSummaryCell& c, int metric) {
      return metric == 0 ? c.stoi : metric == 1 ? c.sdi : c.lsd;
    };
    const char* names[3] = {"STOI", "SDI", "LSD (dB)"};
    for (int metric = 0; metric < 3; ++metric) {
      f << "== " << names[metric] << " ==\n";
      std::ostringstream head;
      head << std::left << std::setw(18) << "model";
      auto col_header = [&](const std::vector<double>& cols) {
        for (double t : cols) head << std::right << std::setw(9) << detail::t60_tag(t);
      };
      col_header(matched_cols);
      head << "  |";
      col_header(mismatched_cols);
      head << std::right << std::setw(9) << "Avg";
      f << head.str() << "\n";
      f << std::string(18, ' ') << "(matched";
      f << std::string(std::max<int>(1, 9 * static_cast<int>(matched_cols.size()) - 8), ' ')
        << ")  |(mismatched)\n";
      for (const auto& model_name : report.models) {
        std::ostringstream line;
        line << std::left << std::setw(18) << model_name << std::right << std::fixed
             << std::setprecision(4);
        for (double t : matched_cols) line << std::setw(9) << metric_of(report.mean(model_name, t), metric);
        line << "  |";
        for (double t : mismatched_cols) line << std::setw(9) << metric_of(report.mean(model_name, t), metric);
        line << std::setw(9) << metric_of(report.mean(model_name, std::nullopt), metric);
        f << line.str() << "\n";
      }
      f << "\n";
    }
  }
  return report;
}

// --- Single-file operations ---

// Infers the analysis configuration a bare HDDAE checkpoint was trained
// with: bins fix the FFT size, the input dimension fixes the context radius,
// and the hop defaults to half a frame.
inline AnalysisConfig analysis_from_hddae(const HddaeModel& m) {
  AnalysisConfig cfg;
  const int bins = m.spec().output_dim;
  cfg.fft_size = 2 * (bins - 1);
  cfg.frame_len = cfg.fft_size;
  cfg.hop = cfg.frame_len / 2;
  const int width = m.spec().input_dim / bins;
  cfg.context_radius = (width - 1) / 2;
  if (cfg.fft_size < 2 || m.spec().input_dim != bins * width || width % 2 == 0)
    throw DataError("cannot infer analysis configuration from checkpoint shapes");
  return cfg;
}

// Dereverberates one WAV file with a checkpoint or ensemble manifest.
// Returns the number of output samples clipped during PCM16 conversion.
inline size_t dereverb_file(const std::string& artifact, const std::string& in_wav,
                            const std::string& out_wav,
                            std::optional<AnalysisConfig> analysis = std::nullopt) {
  const LoadedModel model = load_model_artifact(artifact);
  const Waveform in = read_wav(in_wav);
  AnalysisConfig cfg;
  if (analysis) cfg = *analysis;
  else if (std::holds_alternative<IdeaModel>(model)) cfg = std::get<IdeaModel>(model).analysis;
  else cfg = analysis_from_hddae(std::get<HddaeModel>(model));
  const Waveform out = run_model(model, cfg, in);
  return write_wav_pcm16(out_wav, out);
}

// Emits the LPS matrix of a WAV file as CSV (header row, one line per frame).
inline void spectrogram_csv(const std::string& in_wav, const std::string& out_csv,
                            const AnalysisConfig& cfg = AnalysisConfig{}) {
  const Waveform w = read_wav(in_wav);
  const Matrix m = lps(stft(w, cfg));
  std::ofstream f(out_csv);
  if (!f) throw DataError("cannot write spectrogram CSV: " + out_csv);
  for (Eigen::Index b = 0; b < m.cols(); ++b) f << (b ? "," : "") << "bin_" << b;
  f << "\n";
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.6f", m(r, c));
      f << (c ? "," : "") << buf;
    }
    f << "\n";
  }
}

}  // namespace drvk
