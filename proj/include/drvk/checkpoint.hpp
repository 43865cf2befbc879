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

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "drvk/cnn.hpp"
#include "drvk/common.hpp"
#include "drvk/nn.hpp"
#include "drvk/train.hpp"

namespace drvk {

// Checkpoint file layout (little-endian):
//   magic "DRVK" | u32 version (=1) | u32 model kind (1 hddae, 2 fusion cnn)
//   shape table (u32 fields, model-kind specific)
//   u64 parameter count | f64 parameter blob (declared layer order)
//   input normalizer  (u32 dim, f64 mean[dim], f64 std[dim])
//   output normalizer (u32 dim, f64 mean[dim], f64 std[dim])
//   u32 epochs run | f64 final training loss

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

enum class ModelKind : uint32_t { kHddae = 1, kFusionCnn = 2 };

namespace detail {

class ByteWriter {
 public:
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void f64s(const double* p, size_t n) { raw(p, 8 * n); }
  void bytes(const char* p, size_t n) { raw(p, n); }
  const std::string& str() const { return buf_; }

 private:
  void raw(const void* p, size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& buf, const std::string& what)
      : buf_(buf), what_(what) {}

  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  void f64s(double* p, size_t n) { raw(p, 8 * n); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError("corrupted checkpoint: " + what_);
  }
  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  const std::string& buf_;
  std::string what_;
  size_t pos_ = 0;
};

inline void write_normalizer(ByteWriter& w, const Normalizer& n) {
  w.u32(static_cast<uint32_t>(n.dim()));
  w.f64s(n.mean.data(), n.mean.size());
  w.f64s(n.stddev.data(), n.stddev.size());
}

inline Normalizer read_normalizer(ByteReader& r) {
  Normalizer n;
  const uint32_t dim = r.u32();
  n.mean.resize(dim);
  n.stddev.resize(dim);
  r.f64s(n.mean.data(), dim);
  r.f64s(n.stddev.data(), dim);
  return n;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("short write to checkpoint: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline void check_header(ByteReader& r) {
  if (r.bytes(4) != "DRVK") throw DataError("not a drvk checkpoint");
  const uint32_t version = r.u32();
  if (version != 1)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace detail

inline void save_checkpoint(const HddaeModel& m, const std::string& path,
                            const TrainHistory* meta = nullptr) {
  detail::ByteWriter w;
  w.bytes("DRVK", 4);
  w.u32(detail::kCheckpointVersion);
  w.u32(static_cast<uint32_t>(ModelKind::kHddae));
  const HddaeSpec& s = m.spec();
  w.u32(s.input_dim);
  w.u32(s.hidden_dim);
  w.u32(s.output_dim);
  w.u32(s.hidden_layers);
  w.u32(static_cast<uint32_t>(s.activation));
  w.u64(m.param_count());
  w.f64s(m.params().data(), m.param_count());
  detail::write_normalizer(w, m.input_norm());
  detail::write_normalizer(w, m.output_norm());
  w.u32(meta ? static_cast<uint32_t>(meta->epochs_run) : 0);
  w.f64(meta ? meta->final_loss : 0.0);
  detail::write_file(path, w.str());
}

inline void save_checkpoint(const FusionCnnModel& m, const std::string& path,
                            const TrainHistory* meta = nullptr) {
  detail::ByteWriter w;
  w.bytes("DRVK", 4);
  w.u32(detail::kCheckpointVersion);
  w.u32(static_cast<uint32_t>(ModelKind::kFusionCnn));
  const FusionCnnSpec& s = m.spec();
  w.u32(s.in_channels);
  w.u32(s.bins);
  w.u32(s.conv_layers);
  w.u32(s.conv_channels);
  w.u32(s.kernel);
  w.u32(s.fc_dim);
  w.u32(static_cast<uint32_t>(s.activation));
  w.u64(m.param_count());
  w.f64s(m.params().data(), m.param_count());
  detail::write_normalizer(w, m.input_norm());
  detail::write_normalizer(w, m.output_norm());
  w.u32(meta ? static_cast<uint32_t>(meta->epochs_run) : 0);
  w.f64(meta ? meta->final_loss : 0.0);
  detail::write_file(path, w.str());
}

inline ModelKind peek_checkpoint_kind(const std::string& path) {
  const std::string buf = detail::read_file(path);
  detail::ByteReader r(buf, path);
  detail::check_header(r);
  const uint32_t kind = r.u32();
  if (kind != 1 && kind != 2)
    throw DataError("unknown model kind in checkpoint: " + path);
  return static_cast<ModelKind>(kind);
}

inline HddaeModel load_hddae_checkpoint(const std::string& path) {
  const std::string buf = detail::read_file(path);
  detail::ByteReader r(buf, path);
  detail::check_header(r);
  if (r.u32() != static_cast<uint32_t>(ModelKind::kHddae))
    throw DataError("checkpoint is not a highway-DDAE model: " + path);
  HddaeSpec s;
  s.input_dim = static_cast<int>(r.u32());
  s.hidden_dim = static_cast<int>(r.u32());
  s.output_dim = static_cast<int>(r.u32());
  s.hidden_layers = static_cast<int>(r.u32());
  s.activation = static_cast<Activation>(r.u32());
  HddaeModel m(s);
  const uint64_t count = r.u64();
  if (count != m.param_count()) throw DataError("corrupted checkpoint: " + path);
  r.f64s(m.params().data(), count);
  m.input_norm() = detail::read_normalizer(r);
  m.output_norm() = detail::read_normalizer(r);
  r.u32();  // epochs run
  r.f64();  // final loss
  m.input_norm().validate(s.input_dim);
  m.output_norm().validate(s.output_dim);
  return m;
}

inline FusionCnnModel load_cnn_checkpoint(const std::string& path) {
  const std::string buf = detail::read_file(path);
  detail::ByteReader r(buf, path);
  detail::check_header(r);
  if (r.u32() != static_cast<uint32_t>(ModelKind::kFusionCnn))
    throw DataError("checkpoint is not a fusion CNN model: " + path);
  FusionCnnSpec s;
  s.in_channels = static_cast<int>(r.u32());
  s.bins = static_cast<int>(r.u32());
  s.conv_layers = static_cast<int>(r.u32());
  s.conv_channels = static_cast<int>(r.u32());
  s.kernel = static_cast<int>(r.u32());
  s.fc_dim = static_cast<int>(r.u32());
  s.activation = static_cast<Activation>(r.u32());
  FusionCnnModel m(s);
  const uint64_t count = r.u64();
  if (count != m.param_count()) throw DataError("corrupted checkpoint: " + path);
  r.f64s(m.params().data(), count);
  m.input_norm() = detail::read_normalizer(r);
  m.output_norm() = detail::read_normalizer(r);
  r.u32();
  r.f64();
  m.input_norm().validate(s.input_dim());
  m.output_norm().validate(s.output_dim());
  return m;
}

}  // namespace drvk
