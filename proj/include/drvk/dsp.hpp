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
#include <functional>
#include <utility>
#include <vector>

#include "drvk/common.hpp"
#include "drvk/fft.hpp"

namespace drvk {

// Mono time-domain signal. Samples are dimensionless, nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  size_t size() const { return samples.size(); }

  void validate() const {
    if (samples.empty()) throw DataError("waveform is empty");
    if (sample_rate <= 0) throw DataError("waveform sample rate must be positive");
    if (!all_finite(samples)) throw DataError("waveform contains non-finite samples");
  }
};

// Frame/feature parameters of the analysis-synthesis chain.
// Defaults give 32 ms frames with 16 ms shift at 16 kHz, 257 spectral bins
// and 257*(2*5+1) = 2827 spliced feature dimensions.
struct AnalysisConfig {
  int frame_len = 512;
  int hop = 256;
  int fft_size = 512;
  int context_radius = 5;   // M frames on each side
  double log_floor = 1e-12; // power floor before the log

  int bins() const { return fft_size / 2 + 1; }
  int spliced_dim() const { return bins() * (2 * context_radius + 1); }

  void validate() const {
    if (hop <= 0 || hop > frame_len) throw DataError("analysis config: need 0 < hop <= frame_len");
    if (fft_size < frame_len) throw DataError("analysis config: need fft_size >= frame_len");
    if (fft_size % 2 != 0) throw DataError("analysis config: fft_size must be even");
    if (context_radius < 0) throw DataError("analysis config: context radius must be >= 0");
    if (!(log_floor > 0.0)) throw DataError("analysis config: log floor must be > 0");
  }
};

// Frames x bins one-sided STFT. Carries the config it was produced with so
// downstream stages agree on framing.
struct ComplexSpectrogram {
  ComplexMatrix values;  // frames x bins
  int sample_rate = 16000;
  AnalysisConfig config;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bins() const { return values.cols(); }
};

// Periodic Hann, the analysis window of the whole toolkit.
inline std::vector<double> hann_periodic(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
  return w;
}

inline int stft_frame_count(size_t num_samples, const AnalysisConfig& cfg) {
  if (num_samples < static_cast<size_t>(cfg.frame_len)) return 1;
  return static_cast<int>((num_samples - cfg.frame_len) / cfg.hop) + 1;
}

inline ComplexSpectrogram stft(const Waveform& w, const AnalysisConfig& cfg) {
  cfg.validate();
  w.validate();
  const int frames = stft_frame_count(w.size(), cfg);
  const int bins = cfg.bins();
  const auto window = hann_periodic(cfg.frame_len);

  ComplexSpectrogram out;
  out.sample_rate = w.sample_rate;
  out.config = cfg;
  out.values.resize(frames, bins);

  std::vector<double> frame(cfg.fft_size);
  for (int f = 0; f < frames; ++f) {
    const size_t start = static_cast<size_t>(f) * cfg.hop;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int i = 0; i < cfg.frame_len; ++i) {
      const size_t t = start + i;
      if (t < w.size()) frame[i] = w.samples[t] * window[i];  // zero-pad past the end
    }
    const auto spec = rfft(frame);
    for (int b = 0; b < bins; ++b) out.values(f, b) = spec[b];
  }
  return out;
}

// Weighted overlap-add synthesis: each inverse-transformed frame is windowed
// again and the result divided by the accumulated squared window, which
// reconstructs unmodified spectra exactly away from the signal edges.
inline Waveform istft(const ComplexSpectrogram& spec, size_t target_len) {
  spec.config.validate();
  const AnalysisConfig& cfg = spec.config;
  if (spec.bins() != cfg.bins())
    throw DataError("istft: spectrogram bin count inconsistent with its config");
  if (spec.frames() < 1) throw DataError("istft: empty spectrogram");

  const auto window = hann_periodic(cfg.frame_len);
  const size_t synth_len = static_cast<size_t>(spec.frames() - 1) * cfg.hop + cfg.frame_len;
  std::vector<double> acc(synth_len, 0.0), norm(synth_len, 0.0);

  std::vector<cdouble> half(cfg.bins());
  for (Eigen::Index f = 0; f < spec.frames(); ++f) {
    for (int b = 0; b < cfg.bins(); ++b) half[b] = spec.values(f, b);
    const auto frame = irfft(half, cfg.fft_size);
    const size_t start = static_cast<size_t>(f) * cfg.hop;
    for (int i = 0; i < cfg.frame_len; ++i) {
      acc[start + i] += frame[i] * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }

  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(target_len, 0.0);
  const size_t n = std::min(target_len, synth_len);
  for (size_t t = 0; t < n; ++t)
    out.samples[t] = norm[t] > 1e-10 ? acc[t] / norm[t] : 0.0;
  return out;
}

// Log power spectrogram: entry = ln(max(|X|^2, log_floor)).
inline Matrix lps(const ComplexSpectrogram& spec) {
  Matrix out(spec.frames(), spec.bins());
  const double floor = spec.config.log_floor;
  for (Eigen::Index f = 0; f < spec.frames(); ++f)
    for (Eigen::Index b = 0; b < spec.bins(); ++b)
      out(f, b) = std::log(std::max(std::norm(spec.values(f, b)), floor));
  return out;
}

// Context splicing: row i becomes [row(i-M); ...; row(i); ...; row(i+M)],
// replicating the first/last row past the edges.
inline Matrix splice(const Matrix& feats, int context_radius) {
  if (feats.rows() < 1) throw DataError("splice: empty feature matrix");
  if (context_radius < 0) throw DataError("splice: negative context radius");
  const Eigen::Index frames = feats.rows(), bins = feats.cols();
  const int width = 2 * context_radius + 1;
  Matrix out(frames, bins * width);
  for (Eigen::Index i = 0; i < frames; ++i) {
    for (int j = -context_radius; j <= context_radius; ++j) {
      const Eigen::Index src = std::clamp<Eigen::Index>(i + j, 0, frames - 1);
      out.block(i, (j + context_radius) * bins, 1, bins) = feats.row(src);
    }
  }
  return out;
}

// Spectral restoration: magnitude exp(lps/2) with the phase of phase_src.
inline ComplexSpectrogram restore_spectrum(const Matrix& est_lps,
                                           const ComplexSpectrogram& phase_src) {
  if (est_lps.rows() != phase_src.frames() || est_lps.cols() != phase_src.bins())
    throw DataError("restore_spectrum: shape mismatch between estimate and phase source");
  ComplexSpectrogram out;
  out.sample_rate = phase_src.sample_rate;
  out.config = phase_src.config;
  out.values.resize(phase_src.frames(), phase_src.bins());
  for (Eigen::Index f = 0; f < phase_src.frames(); ++f) {
    for (Eigen::Index b = 0; b < phase_src.bins(); ++b) {
      const double mag = std::exp(0.5 * est_lps(f, b));
      const cdouble y = phase_src.values(f, b);
      const double ymag = std::abs(y);
      // Zero magnitude has no phase; fall back to zero phase.
      out.values(f, b) = ymag > 0.0 ? cdouble(y / ymag * mag) : cdouble(mag, 0.0);
    }
  }
  return out;
}

// Maps a batch of spliced LPS rows (frames x D) to LPS rows (frames x bins).
using FrameMapper = std::function<Matrix(const Matrix&)>;

// Full enhancement chain: STFT -> LPS -> splice -> mapper -> spectral
// restoration with the input's phase -> inverse STFT. Output length equals
// input length.
inline Waveform dereverb_pipeline(const Waveform& y, const FrameMapper& model_fn,
                                  const AnalysisConfig& cfg) {
  const ComplexSpectrogram spec = stft(y, cfg);
  const Matrix feats = splice(lps(spec), cfg.context_radius);
  const Matrix est = model_fn(feats);
  if (est.rows() != spec.frames() || est.cols() != spec.bins())
    throw DataError("dereverb_pipeline: model output shape mismatch");
  return istft(restore_spectrum(est, spec), y.size());
}

}  // namespace drvk
