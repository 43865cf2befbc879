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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drvk/common.hpp"
#include "drvk/dsp.hpp"
#include "drvk/nn.hpp"
#include "drvk/pseudo_speech.hpp"
#include "drvk/rir.hpp"
#include "drvk/rng.hpp"
#include "drvk/train.hpp"
#include "drvk/wav.hpp"

namespace drvk {

namespace fs = std::filesystem;

// Experiment description: corpus locations, room/T60 grid, analysis and
// model/training hyperparameters. Parsed from a flat "key = value" config
// file; every key has a default (the paper-scale setup).
struct ExperimentConfig {
  uint64_t seed = 12345;
  std::string out_dir = "runs/exp";
  std::string clean_train_dir = "corpus/train";
  std::string clean_test_dir = "corpus/test";
  int sample_rate = 16000;

  std::vector<std::array<double, 3>> room_dims = {
      {4.0, 4.0, 4.0}, {6.0, 6.0, 4.0}, {10.0, 10.0, 8.0}};
  std::vector<double> train_t60 = {0.3, 0.6, 0.9};
  std::vector<double> test_t60 = {0.3, 0.4, 0.6, 0.7, 0.9, 1.0};
  int rirs_per_train_t60 = 3;
  int rirs_per_test_t60 = 1;

  AnalysisConfig analysis;

  int hidden_dim = 2048;
  int specialist_layers = 3;
  int deep_layers = 6;
  int conv_layers = 2;
  int conv_channels = 32;
  int conv_kernel = 11;
  int fc_dim = 2048;

  TrainConfig train;

  int gen_train_count = 20;
  int gen_test_count = 5;
  double gen_duration_s = 1.6;

  void validate() const {
    analysis.validate();
    train.validate();
    if (room_dims.empty()) throw DataError("config: no rooms");
    if (train_t60.empty() || test_t60.empty()) throw DataError("config: empty T60 grid");
    for (double t : train_t60)
      if (!(t > 0)) throw DataError("config: T60 values must be positive");
    for (double t : test_t60)
      if (!(t > 0)) throw DataError("config: T60 values must be positive");
    if (rirs_per_train_t60 <= 0 || rirs_per_test_t60 <= 0)
      throw DataError("config: RIR counts must be positive");
    if (clean_train_dir == clean_test_dir)
      throw DataError("config: train and test corpus directories must differ");
    if (hidden_dim <= 0 || fc_dim <= 0 || conv_channels <= 0)
      throw DataError("config: model dimensions must be positive");
    if (specialist_layers < 2 || deep_layers < 2)
      throw DataError("config: layer counts must be >= 2");
  }

  std::vector<double> sorted_train_t60() const {
    auto v = train_t60;
    std::sort(v.begin(), v.end());
    return v;
  }
  std::vector<double> sorted_test_t60() const {
    auto v = test_t60;
    std::sort(v.begin(), v.end());
    return v;
  }

  bool is_train_t60(double t) const {
    for (double v : train_t60)
      if (std::abs(v - t) < 1e-9) return true;
    return false;
  }

  // Canonical serialization; its FNV-1a hash identifies the configuration.
  std::string canonical_text() const;
  std::string hash() const { return hex64(fnv1a64(canonical_text())); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: cannot parse number '" + s + "' for key " + key);
  }
}

inline long parse_int(const std::string& s, const std::string& key) {
  try {
    size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: cannot parse integer '" + s + "' for key " + key);
  }
}

inline std::array<double, 3> parse_room(const std::string& s) {
  std::array<double, 3> d{};
  char sep1 = 0, sep2 = 0;
  std::stringstream ss(s);
  if (!(ss >> d[0] >> sep1 >> d[1] >> sep2 >> d[2]) || sep1 != 'x' || sep2 != 'x')
    throw UsageError("config: room must look like '6x6x4', got '" + s + "'");
  return d;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline std::string ExperimentConfig::canonical_text() const {
  std::ostringstream o;
  o << "seed=" << seed << "\n";
  o << "sample_rate=" << sample_rate << "\n";
  o << "clean_train_dir=" << clean_train_dir << "\n";
  o << "clean_test_dir=" << clean_test_dir << "\n";
  o << "rooms=";
  for (const auto& r : room_dims)
    o << detail::fmt(r[0]) << "x" << detail::fmt(r[1]) << "x" << detail::fmt(r[2]) << ",";
  o << "\ntrain_t60=";
  for (double t : train_t60) o << detail::fmt(t) << ",";
  o << "\ntest_t60=";
  for (double t : test_t60) o << detail::fmt(t) << ",";
  o << "\nrirs_per_train_t60=" << rirs_per_train_t60 << "\n";
  o << "rirs_per_test_t60=" << rirs_per_test_t60 << "\n";
  o << "frame_len=" << analysis.frame_len << "\nhop=" << analysis.hop
    << "\nfft_size=" << analysis.fft_size << "\ncontext_radius=" << analysis.context_radius
    << "\nlog_floor=" << detail::fmt(analysis.log_floor) << "\n";
  o << "hidden_dim=" << hidden_dim << "\nspecialist_layers=" << specialist_layers
    << "\ndeep_layers=" << deep_layers << "\nconv_layers=" << conv_layers
    << "\nconv_channels=" << conv_channels << "\nconv_kernel=" << conv_kernel
    << "\nfc_dim=" << fc_dim << "\n";
  o << "epochs=" << train.epochs << "\nminibatch=" << train.minibatch_size
    << "\nlearning_rate=" << detail::fmt(train.learning_rate)
    << "\nadam_beta1=" << detail::fmt(train.adam_beta1)
    << "\nadam_beta2=" << detail::fmt(train.adam_beta2)
    << "\nadam_eps=" << detail::fmt(train.adam_eps) << "\nshuffle=" << train.shuffle
    << "\nvalidation_fraction=" << detail::fmt(train.validation_fraction)
    << "\npatience=" << train.patience << "\n";
  o << "gen_train_count=" << gen_train_count << "\ngen_test_count=" << gen_test_count
    << "\ngen_duration_s=" << detail::fmt(gen_duration_s) << "\n";
  return o.str();
}

// Flat key=value config file; '#' starts a comment. Unknown keys are errors.
inline ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));

    if (key == "seed") cfg.seed = static_cast<uint64_t>(detail::parse_int(val, key));
    else if (key == "out_dir") cfg.out_dir = val;
    else if (key == "clean_train_dir") cfg.clean_train_dir = val;
    else if (key == "clean_test_dir") cfg.clean_test_dir = val;
    else if (key == "sample_rate") cfg.sample_rate = static_cast<int>(detail::parse_int(val, key));
    else if (key == "rooms") {
      cfg.room_dims.clear();
      for (const auto& r : detail::split_list(val)) cfg.room_dims.push_back(detail::parse_room(r));
    } else if (key == "train_t60") {
      cfg.train_t60.clear();
      for (const auto& t : detail::split_list(val)) cfg.train_t60.push_back(detail::parse_double(t, key));
    } else if (key == "test_t60") {
      cfg.test_t60.clear();
      for (const auto& t : detail::split_list(val)) cfg.test_t60.push_back(detail::parse_double(t, key));
    } else if (key == "rirs_per_train_t60") cfg.rirs_per_train_t60 = static_cast<int>(detail::parse_int(val, key));
    else if (key == "rirs_per_test_t60") cfg.rirs_per_test_t60 = static_cast<int>(detail::parse_int(val, key));
    else if (key == "frame_len") cfg.analysis.frame_len = static_cast<int>(detail::parse_int(val, key));
    else if (key == "hop") cfg.analysis.hop = static_cast<int>(detail::parse_int(val, key));
    else if (key == "fft_size") cfg.analysis.fft_size = static_cast<int>(detail::parse_int(val, key));
    else if (key == "context_radius") cfg.analysis.context_radius = static_cast<int>(detail::parse_int(val, key));
    else if (key == "log_floor") cfg.analysis.log_floor = detail::parse_double(val, key);
    else if (key == "hidden_dim") cfg.hidden_dim = static_cast<int>(detail::parse_int(val, key));
    else if (key == "specialist_layers") cfg.specialist_layers = static_cast<int>(detail::parse_int(val, key));
    else if (key == "deep_layers") cfg.deep_layers = static_cast<int>(detail::parse_int(val, key));
    else if (key == "conv_layers") cfg.conv_layers = static_cast<int>(detail::parse_int(val, key));
    else if (key == "conv_channels") cfg.conv_channels = static_cast<int>(detail::parse_int(val, key));
    else if (key == "conv_kernel") cfg.conv_kernel = static_cast<int>(detail::parse_int(val, key));
    else if (key == "fc_dim") cfg.fc_dim = static_cast<int>(detail::parse_int(val, key));
    else if (key == "epochs") cfg.train.epochs = static_cast<int>(detail::parse_int(val, key));
    else if (key == "minibatch") cfg.train.minibatch_size = static_cast<int>(detail::parse_int(val, key));
    else if (key == "learning_rate") cfg.train.learning_rate = detail::parse_double(val, key);
    else if (key == "adam_beta1") cfg.train.adam_beta1 = detail::parse_double(val, key);
    else if (key == "adam_beta2") cfg.train.adam_beta2 = detail::parse_double(val, key);
    else if (key == "adam_eps") cfg.train.adam_eps = detail::parse_double(val, key);
    else if (key == "shuffle") cfg.train.shuffle = detail::parse_int(val, key) != 0;
    else if (key == "validation_fraction") cfg.train.validation_fraction = detail::parse_double(val, key);
    else if (key == "patience") cfg.train.patience = static_cast<int>(detail::parse_int(val, key));
    else if (key == "gen_train_count") cfg.gen_train_count = static_cast<int>(detail::parse_int(val, key));
    else if (key == "gen_test_count") cfg.gen_test_count = static_cast<int>(detail::parse_int(val, key));
    else if (key == "gen_duration_s") cfg.gen_duration_s = detail::parse_double(val, key);
    else throw UsageError("config: unknown key '" + key + "' at line " + std::to_string(line_no));
  }
  cfg.validate();
  return cfg;
}

// --- Dataset manifest ---

struct RirRecord {
  std::string id;
  std::string path;  // relative to the run directory
  int room = 0;
  double t60 = 0.0;
  int index = 0;  // index within its (split, T60) group
  std::string split;
};

struct UtteranceRecord {
  std::string id;
  std::string split;
  std::string clean_wav;    // absolute or corpus-relative source path
  std::string reverb_wav;   // relative to the run directory
  std::string clean_feat;   // relative to the run directory
  std::string reverb_feat;  // relative to the run directory
  int room = 0;
  std::string rir_id;
  double t60 = 0.0;
};

struct DatasetManifest {
  std::string config_hash;
  int sample_rate = 16000;
  AnalysisConfig analysis;
  std::vector<RoomSpec> rooms;
  std::vector<RirRecord> rirs;
  std::vector<UtteranceRecord> entries;
  std::string content_hash;

  size_t count(const std::string& split) const {
    size_t n = 0;
    for (const auto& e : entries) n += e.split == split ? 1 : 0;
    return n;
  }

  std::string compute_content_hash() const {
    std::ostringstream o;
    for (const auto& e : entries)
      o << e.id << "|" << e.split << "|" << e.clean_wav << "|" << e.reverb_wav << "|"
        << e.room << "|" << e.rir_id << "|" << detail::fmt(e.t60) << "\n";
    return hex64(fnv1a64(o.str()));
  }

  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

inline void DatasetManifest::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "drvk-dataset";
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["sample_rate"] = sample_rate;
  j["analysis"] = {{"frame_len", analysis.frame_len},
                   {"hop", analysis.hop},
                   {"fft_size", analysis.fft_size},
                   {"context_radius", analysis.context_radius},
                   {"log_floor", analysis.log_floor}};
  j["rooms"] = nlohmann::json::array();
  for (const auto& r : rooms)
    j["rooms"].push_back({{"dims", r.dims}, {"source", r.source}, {"receiver", r.receiver}});
  j["rirs"] = nlohmann::json::array();
  for (const auto& r : rirs)
    j["rirs"].push_back({{"id", r.id},
                         {"path", r.path},
                         {"room", r.room},
                         {"t60", r.t60},
                         {"index", r.index},
                         {"split", r.split}});
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries)
    j["entries"].push_back({{"id", e.id},
                            {"split", e.split},
                            {"clean_wav", e.clean_wav},
                            {"reverb_wav", e.reverb_wav},
                            {"clean_feat", e.clean_feat},
                            {"reverb_feat", e.reverb_feat},
                            {"room", e.room},
                            {"rir_id", e.rir_id},
                            {"t60", e.t60}});
  j["content_hash"] = content_hash;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

inline DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest (run 'prepare' first?): " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest: " + std::string(e.what()));
  }
  if (j.value("format", "") != "drvk-dataset")
    throw DataError("not a drvk dataset manifest: " + path);
  DatasetManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.sample_rate = j.at("sample_rate").get<int>();
  const auto& a = j.at("analysis");
  m.analysis.frame_len = a.at("frame_len").get<int>();
  m.analysis.hop = a.at("hop").get<int>();
  m.analysis.fft_size = a.at("fft_size").get<int>();
  m.analysis.context_radius = a.at("context_radius").get<int>();
  m.analysis.log_floor = a.at("log_floor").get<double>();
  for (const auto& rj : j.at("rooms")) {
    RoomSpec r;
    r.dims = rj.at("dims").get<std::array<double, 3>>();
    r.source = rj.at("source").get<std::array<double, 3>>();
    r.receiver = rj.at("receiver").get<std::array<double, 3>>();
    m.rooms.push_back(r);
  }
  for (const auto& rj : j.at("rirs")) {
    RirRecord r;
    r.id = rj.at("id").get<std::string>();
    r.path = rj.at("path").get<std::string>();
    r.room = rj.at("room").get<int>();
    r.t60 = rj.at("t60").get<double>();
    r.index = rj.at("index").get<int>();
    r.split = rj.at("split").get<std::string>();
    m.rirs.push_back(r);
  }
  for (const auto& ej : j.at("entries")) {
    UtteranceRecord e;
    e.id = ej.at("id").get<std::string>();
    e.split = ej.at("split").get<std::string>();
    e.clean_wav = ej.at("clean_wav").get<std::string>();
    e.reverb_wav = ej.at("reverb_wav").get<std::string>();
    e.clean_feat = ej.at("clean_feat").get<std::string>();
    e.reverb_feat = ej.at("reverb_feat").get<std::string>();
    e.room = ej.at("room").get<int>();
    e.rir_id = ej.at("rir_id").get<std::string>();
    e.t60 = ej.at("t60").get<double>();
    m.entries.push_back(e);
  }
  m.content_hash = j.at("content_hash").get<std::string>();
  return m;
}

// --- Feature cache: one LPS matrix per file ---

inline void write_feature_matrix(const std::string& path, const Matrix& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write feature cache: " + path);
  f.write("DRVF", 4);
  const uint32_t rows = static_cast<uint32_t>(m.rows());
  const uint32_t cols = static_cast<uint32_t>(m.cols());
  f.write(reinterpret_cast<const char*>(&rows), 4);
  f.write(reinterpret_cast<const char*>(&cols), 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      f.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!f) throw DataError("short write to feature cache: " + path);
}

inline Matrix read_feature_matrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open feature cache: " + path);
  char magic[4];
  uint32_t rows = 0, cols = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&rows), 4);
  f.read(reinterpret_cast<char*>(&cols), 4);
  if (!f || std::string(magic, 4) != "DRVF")
    throw DataError("corrupted feature cache: " + path);
  Matrix m(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      double v;
      f.read(reinterpret_cast<char*>(&v), 8);
      if (!f) throw DataError("corrupted feature cache: " + path);
      m(r, c) = v;
    }
  return m;
}

// --- Per-condition normalizer statistics ---

struct ConditionStats {
  MomentStats input;   // spliced reverberant LPS
  MomentStats output;  // clean LPS

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write stats: " + path);
    f.write("DRVS", 4);
    auto put = [&](const MomentStats& s) {
      const uint32_t dim = static_cast<uint32_t>(s.sum.size());
      const int64_t count = s.count;
      f.write(reinterpret_cast<const char*>(&dim), 4);
      f.write(reinterpret_cast<const char*>(&count), 8);
      f.write(reinterpret_cast<const char*>(s.sum.data()), 8 * dim);
      f.write(reinterpret_cast<const char*>(s.sumsq.data()), 8 * dim);
    };
    put(input);
    put(output);
    if (!f) throw DataError("short write to stats: " + path);
  }

  static ConditionStats load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open stats: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "DRVS") throw DataError("corrupted stats: " + path);
    auto get = [&](MomentStats& s) {
      uint32_t dim = 0;
      int64_t count = 0;
      f.read(reinterpret_cast<char*>(&dim), 4);
      f.read(reinterpret_cast<char*>(&count), 8);
      s.count = count;
      s.sum.resize(dim);
      s.sumsq.resize(dim);
      f.read(reinterpret_cast<char*>(s.sum.data()), 8 * dim);
      f.read(reinterpret_cast<char*>(s.sumsq.data()), 8 * dim);
      if (!f) throw DataError("corrupted stats: " + path);
    };
    ConditionStats cs;
    get(cs.input);
    get(cs.output);
    return cs;
  }
};

namespace detail {

inline std::string t60_tag(double t60) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t60);
  return buf;
}

inline std::vector<std::string> list_wavs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .wav files in corpus directory: " + dir);
  return files;
}

// Round-trip through the 16-bit quantization the reverb files are stored
// with, so cached features match the persisted audio exactly.
inline void quantize_pcm16(Waveform& w) {
  for (double& s : w.samples)
    s = static_cast<double>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0)) / 32768.0;
}

// Source/receiver placement for a room: seeded, >=0.5 m from every wall,
// >=1 m apart. Fixed per room across all T60 conditions.
inline RoomSpec place_room(const std::array<double, 3>& dims, uint64_t seed, int room_index) {
  Rng rng(derive_seed(seed, "room-positions", static_cast<uint64_t>(room_index)));
  RoomSpec room;
  room.dims = dims;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (int i = 0; i < 3; ++i) {
      const double margin = std::min(0.5, dims[i] * 0.25);
      room.source[i] = rng.uniform(margin, dims[i] - margin);
      room.receiver[i] = rng.uniform(margin, dims[i] - margin);
    }
    double d2 = 0;
    for (int i = 0; i < 3; ++i) {
      const double d = room.source[i] - room.receiver[i];
      d2 += d * d;
    }
    if (d2 >= 1.0) return room;
  }
  throw DataError("could not place source/receiver >=1 m apart in room");
}

constexpr double kRirTargetEnergy = 0.25;  // fixed gain normalization of stored RIRs

}  // namespace detail

// Synthesizes the clean corpus (gen-testdata).
inline void generate_corpus(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.clean_train_dir);
  fs::create_directories(cfg.clean_test_dir);
  char name[64];
  for (int i = 0; i < cfg.gen_train_count; ++i) {
    const Waveform w = make_pseudo_speech(derive_seed(cfg.seed, "corpus-train", i),
                                          cfg.gen_duration_s, cfg.sample_rate);
    std::snprintf(name, sizeof(name), "train_%03d.wav", i);
    write_wav_pcm16((fs::path(cfg.clean_train_dir) / name).string(), w);
  }
  for (int i = 0; i < cfg.gen_test_count; ++i) {
    const Waveform w = make_pseudo_speech(derive_seed(cfg.seed, "corpus-test", i),
                                          cfg.gen_duration_s, cfg.sample_rate);
    std::snprintf(name, sizeof(name), "test_%03d.wav", i);
    write_wav_pcm16((fs::path(cfg.clean_test_dir) / name).string(), w);
  }
}

// Dataset synthesis: RIR generation, corpus contamination, feature caching,
// per-condition normalizer statistics and the manifest.
inline DatasetManifest prepare_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "rirs");
  fs::create_directories(out / "reverb" / "train");
  fs::create_directories(out / "reverb" / "test");
  fs::create_directories(out / "features" / "clean" / "train");
  fs::create_directories(out / "features" / "clean" / "test");
  fs::create_directories(out / "features" / "reverb");
  fs::create_directories(out / "stats");

  DatasetManifest manifest;
  manifest.config_hash = cfg.hash();
  manifest.sample_rate = cfg.sample_rate;
  manifest.analysis = cfg.analysis;

  const int n_rooms = static_cast<int>(cfg.room_dims.size());
  for (int r = 0; r < n_rooms; ++r)
    manifest.rooms.push_back(detail::place_room(cfg.room_dims[r], cfg.seed, r));

  // RIR plan. Train: rirs_per_train_t60 rooms per T60, rotating through the
  // room list. Test: matched T60s reuse train RIR 0 (unseen speech through a
  // seen channel); mismatched T60s get fresh RIRs in the fixed rooms.
  std::map<std::string, ImpulseResponse> rir_bank;
  auto synthesize = [&](double t60, int room_idx, int index, const std::string& split)
      -> RirRecord {
    RirRecord rec;
    rec.id = split + "_t" + detail::t60_tag(t60) + "_r" + std::to_string(index) + "_room" +
             std::to_string(room_idx);
    rec.room = room_idx;
    rec.t60 = t60;
    rec.index = index;
    rec.split = split;
    rec.path = (fs::path("rirs") / (rec.id + ".wav")).string();
    RirConfig rc;
    rc.t60 = t60;
    rc.sample_rate = cfg.sample_rate;
    ImpulseResponse rir = generate_rir(manifest.rooms[room_idx], rc);
    const double e = rir.energy();
    if (!(e > 0)) throw NumericError("generated RIR has no energy: " + rec.id);
    const double scale = std::sqrt(detail::kRirTargetEnergy / e);
    for (double& t : rir.taps) t *= scale;
    write_wav_float32((out / rec.path).string(), Waveform{rir.taps, rir.sample_rate});
    rir_bank[rec.id] = std::move(rir);
    return rec;
  };

  const auto train_grid = cfg.sorted_train_t60();
  const auto test_grid = cfg.sorted_test_t60();
  for (int i = 0; i < static_cast<int>(train_grid.size()); ++i)
    for (int j = 0; j < cfg.rirs_per_train_t60; ++j)
      manifest.rirs.push_back(synthesize(train_grid[i], (i + j) % n_rooms, j, "train"));
  for (int i = 0; i < static_cast<int>(test_grid.size()); ++i) {
    for (int j = 0; j < cfg.rirs_per_test_t60; ++j) {
      if (cfg.is_train_t60(test_grid[i])) {
        // Reference the already-synthesized training RIR.
        for (const auto& r : manifest.rirs)
          if (r.split == "train" && std::abs(r.t60 - test_grid[i]) < 1e-9 &&
              r.index == j % cfg.rirs_per_train_t60) {
            RirRecord rec = r;
            rec.split = "test";
            rec.index = j;
            manifest.rirs.push_back(rec);
            break;
          }
      } else {
        manifest.rirs.push_back(synthesize(test_grid[i], (i + j) % n_rooms, j, "test"));
      }
    }
  }

  // Contaminate the corpus and cache features.
  std::map<std::string, ConditionStats> stats;  // keyed by train T60 tag
  auto process_split = [&](const std::string& split, const std::string& corpus_dir) {
    const auto files = detail::list_wavs(corpus_dir);
    for (const auto& clean_path : files) {
      const std::string stem = fs::path(clean_path).stem().string();
      const Waveform clean = read_wav(clean_path);
      if (clean.sample_rate != cfg.sample_rate)
        throw DataError("corpus sample rate is " + std::to_string(clean.sample_rate) +
                        ", expected " + std::to_string(cfg.sample_rate) +
                        " (no silent resampling): " + clean_path);
      clean.validate();
      const Matrix clean_lps = lps(stft(clean, cfg.analysis));
      const std::string clean_feat =
          (fs::path("features") / "clean" / split / (stem + ".lpsf")).string();
      write_feature_matrix((out / clean_feat).string(), clean_lps);

      for (const auto& rir_rec : manifest.rirs) {
        if (rir_rec.split != split) continue;
        Waveform reverb = convolve(clean, rir_bank.at(rir_rec.id));
        detail::quantize_pcm16(reverb);
        const std::string reverb_name = stem + "__" + rir_rec.id;
        const std::string reverb_wav =
            (fs::path("reverb") / split / (reverb_name + ".wav")).string();
        write_wav_pcm16((out / reverb_wav).string(), reverb);

        // The cache stores the unspliced LPS; splicing is cheap on load.
        const Matrix reverb_lps = lps(stft(reverb, cfg.analysis));
        const std::string reverb_feat =
            (fs::path("features") / "reverb" / (reverb_name + ".lpsf")).string();
        write_feature_matrix((out / reverb_feat).string(), reverb_lps);

        UtteranceRecord e;
        e.id = split + "/" + reverb_name;
        e.split = split;
        e.clean_wav = clean_path;
        e.reverb_wav = reverb_wav;
        e.clean_feat = clean_feat;
        e.reverb_feat = reverb_feat;
        e.room = rir_rec.room;
        e.rir_id = rir_rec.id;
        e.t60 = rir_rec.t60;
        manifest.entries.push_back(e);

        if (split == "train") {
          auto& cs = stats[detail::t60_tag(rir_rec.t60)];
          cs.input.accumulate(splice(reverb_lps, cfg.analysis.context_radius));
          cs.output.accumulate(clean_lps);
        }
      }
    }
  };
  process_split("train", cfg.clean_train_dir);
  process_split("test", cfg.clean_test_dir);

  for (const auto& [tag, cs] : stats)
    cs.save((out / "stats" / ("cond_" + tag + ".stats")).string());

  manifest.content_hash = manifest.compute_content_hash();
  manifest.save((out / "manifest.json").string());
  return manifest;
}

}  // namespace drvk
