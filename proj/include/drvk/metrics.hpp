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
#include <utility>
#include <vector>

#include "drvk/common.hpp"
#include "drvk/dsp.hpp"
#include "drvk/fft.hpp"
#include "drvk/resample.hpp"

namespace drvk {

// Cross-correlation alignment: finds the processed-signal lag (within
// +-max_lag_s) that best matches the clean reference and trims both to the
// common support. Ties break toward the smaller |lag|.
inline std::pair<Waveform, Waveform> align_trim(const Waveform& clean,
                                                const Waveform& processed,
                                                double max_lag_s = 0.5) {
  clean.validate();
  processed.validate();
  if (clean.sample_rate != processed.sample_rate)
    throw DataError("align_trim: sample-rate mismatch");

  const ptrdiff_t max_lag =
      static_cast<ptrdiff_t>(max_lag_s * clean.sample_rate);
  const size_t nfft = next_pow2(clean.size() + processed.size());
  std::vector<cdouble> a(nfft, 0.0), b(nfft, 0.0);
  for (size_t i = 0; i < clean.size(); ++i) a[i] = clean.samples[i];
  for (size_t i = 0; i < processed.size(); ++i) b[i] = processed.samples[i];
  fft(a);
  fft(b);
  for (size_t i = 0; i < nfft; ++i) a[i] = b[i] * std::conj(a[i]);
  ifft(a);
  // a[l mod nfft] now holds sum_t clean(t) * processed(t + l).

  ptrdiff_t best_lag = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (ptrdiff_t l = -max_lag; l <= max_lag; ++l) {
    const size_t idx = static_cast<size_t>((l % static_cast<ptrdiff_t>(nfft) + nfft) % nfft);
    const double v = a[idx].real();
    if (v > best) {
      best = v;
      best_lag = l;
    } else if (v == best && std::abs(l) < std::abs(best_lag)) {
      best_lag = l;
    }
  }

  const size_t clean_off = best_lag < 0 ? static_cast<size_t>(-best_lag) : 0;
  const size_t proc_off = best_lag > 0 ? static_cast<size_t>(best_lag) : 0;
  if (clean_off >= clean.size() || proc_off >= processed.size())
    throw DataError("align_trim: empty overlap at best lag");
  const size_t n = std::min(clean.size() - clean_off, processed.size() - proc_off);
  if (n == 0) throw DataError("align_trim: empty overlap at best lag");

  Waveform c2{std::vector<double>(clean.samples.begin() + clean_off,
                                  clean.samples.begin() + clean_off + n),
              clean.sample_rate};
  Waveform p2{std::vector<double>(processed.samples.begin() + proc_off,
                                  processed.samples.begin() + proc_off + n),
              processed.sample_rate};
  return {std::move(c2), std::move(p2)};
}

// Speech distortion index: residual-to-speech energy ratio over
// speech-active samples. Activity: 16 ms frames within 35 dB of the loudest
// clean frame.
inline double sdi(const Waveform& clean, const Waveform& processed) {
  clean.validate();
  processed.validate();
  if (clean.size() != processed.size() || clean.sample_rate != processed.sample_rate)
    throw DataError("sdi: signals must be aligned to equal length and rate");

  const size_t frame = static_cast<size_t>(clean.sample_rate) * 16 / 1000;
  const size_t n_frames = (clean.size() + frame - 1) / frame;
  std::vector<double> energy(n_frames, 0.0);
  double peak = 0.0;
  for (size_t f = 0; f < n_frames; ++f) {
    const size_t lo = f * frame, hi = std::min(clean.size(), lo + frame);
    for (size_t t = lo; t < hi; ++t) energy[f] += clean.samples[t] * clean.samples[t];
    peak = std::max(peak, energy[f]);
  }
  if (!(peak > 0.0)) throw DataError("sdi: clean signal has zero energy");

  const double threshold = peak * std::pow(10.0, -35.0 / 10.0);
  double num = 0.0, den = 0.0;
  for (size_t f = 0; f < n_frames; ++f) {
    if (energy[f] < threshold) continue;
    const size_t lo = f * frame, hi = std::min(clean.size(), lo + frame);
    for (size_t t = lo; t < hi; ++t) {
      const double r = processed.samples[t] - clean.samples[t];
      num += r * r;
      den += clean.samples[t] * clean.samples[t];
    }
  }
  if (!(den > 0.0)) throw DataError("sdi: no speech-active samples");
  return num / den;
}

namespace detail {

struct StoiParams {
  static constexpr int kRate = 10000;
  static constexpr int kFrame = 256;
  static constexpr int kHop = 128;
  static constexpr int kFft = 512;
  static constexpr int kBands = 15;
  static constexpr double kLowestBand = 150.0;  // Hz, center of band 0
  static constexpr int kSegment = 30;           // frames per segment (384 ms)
  static constexpr double kDynRange = 40.0;     // dB, silent-frame removal
  static constexpr double kBeta = -15.0;        // dB, lower SDR clip bound
};

// Symmetric Hann without zero endpoints, as used by the published metric.
inline std::vector<double> stoi_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * (i + 1) / (n + 1)));
  return w;
}

// Removes frames whose clean-frame energy is more than kDynRange below the
// loudest frame; both signals are compacted by windowed overlap-add of the
// surviving frames.
inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  using P = StoiParams;
  const auto w = stoi_window(P::kFrame);
  if (x.size() < P::kFrame) {
    x.clear();
    y.clear();
    return;
  }
  const size_t n_frames = (x.size() - P::kFrame) / P::kHop + 1;
  std::vector<double> frame_db(n_frames);
  double max_db = -std::numeric_limits<double>::infinity();
  for (size_t f = 0; f < n_frames; ++f) {
    double e = 0.0;
    for (int i = 0; i < P::kFrame; ++i) {
      const double v = x[f * P::kHop + i] * w[i];
      e += v * v;
    }
    frame_db[f] = 10.0 * std::log10(e + 1e-300);
    max_db = std::max(max_db, frame_db[f]);
  }

  std::vector<double> xs(x.size(), 0.0), ys(y.size(), 0.0);
  size_t count = 0;
  for (size_t f = 0; f < n_frames; ++f) {
    if (frame_db[f] < max_db - P::kDynRange) continue;
    const size_t src = f * P::kHop;
    const size_t dst = count * P::kHop;
    for (int i = 0; i < P::kFrame; ++i) {
      xs[dst + i] += x[src + i] * w[i];
      ys[dst + i] += y[src + i] * w[i];
    }
    ++count;
  }
  const size_t kept = count == 0 ? 0 : (count - 1) * P::kHop + P::kFrame;
  xs.resize(kept);
  ys.resize(kept);
  x = std::move(xs);
  y = std::move(ys);
}

// One-third-octave band magnitudes: bands x frames.
inline Matrix third_octave_bands(const std::vector<double>& sig) {
  using P = StoiParams;
  const auto w = stoi_window(P::kFrame);
  const size_t n_frames =
      sig.size() < P::kFrame ? 0 : (sig.size() - P::kFrame) / P::kHop + 1;
  const int n_bins = P::kFft / 2 + 1;

  // Nearest-bin band edges around center frequencies 150 * 2^(k/3).
  Matrix bands = Matrix::Zero(P::kBands, static_cast<Eigen::Index>(n_frames));
  std::vector<int> lo(P::kBands), hi(P::kBands);
  for (int k = 0; k < P::kBands; ++k) {
    const double cf = P::kLowestBand * std::pow(2.0, k / 3.0);
    const double fl = cf * std::pow(2.0, -1.0 / 6.0);
    const double fr = cf * std::pow(2.0, 1.0 / 6.0);
    auto nearest = [&](double f) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n_bins; ++i) {
        const double d = std::abs(i * static_cast<double>(P::kRate) / P::kFft - f);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      return best;
    };
    lo[k] = nearest(fl);
    hi[k] = nearest(fr);  // exclusive
  }

  std::vector<double> frame(P::kFft);
  for (size_t f = 0; f < n_frames; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int i = 0; i < P::kFrame; ++i) frame[i] = sig[f * P::kHop + i] * w[i];
    const auto spec = rfft(frame);
    for (int k = 0; k < P::kBands; ++k) {
      double e = 0.0;
      for (int b = lo[k]; b < hi[k]; ++b) e += std::norm(spec[b]);
      bands(k, static_cast<Eigen::Index>(f)) = std::sqrt(e);
    }
  }
  return bands;
}

}  // namespace detail

// Short-time objective intelligibility: clipped, normalized correlations of
// one-third-octave band envelopes over 384 ms segments at 10 kHz.
inline double stoi(const Waveform& clean, const Waveform& processed) {
  using P = detail::StoiParams;
  clean.validate();
  processed.validate();
  if (clean.sample_rate != processed.sample_rate)
    throw DataError("stoi: sample-rate mismatch");

  std::vector<double> x = resample(clean, P::kRate).samples;
  std::vector<double> y = resample(processed, P::kRate).samples;
  const size_t n = std::min(x.size(), y.size());
  x.resize(n);
  y.resize(n);
  detail::remove_silent_frames(x, y);

  const Matrix xb = detail::third_octave_bands(x);
  const Matrix yb = detail::third_octave_bands(y);
  if (xb.cols() < P::kSegment)
    throw DataError("stoi: signal too short after silence removal (need 384 ms)");

  const double clip = 1.0 + std::pow(10.0, -P::kBeta / 20.0);
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index m = P::kSegment; m <= xb.cols(); ++m) {
    for (int k = 0; k < P::kBands; ++k) {
      Vector xs = xb.row(k).segment(m - P::kSegment, P::kSegment).transpose();
      Vector ys = yb.row(k).segment(m - P::kSegment, P::kSegment).transpose();
      const double xn = xs.norm(), yn = ys.norm();
      ys *= yn > 0.0 ? xn / yn : 0.0;
      ys = ys.array().min(clip * xs.array()).matrix();
      xs.array() -= xs.mean();
      ys.array() -= ys.mean();
      const double denom = xs.norm() * ys.norm();
      if (denom > 0.0) sum += xs.dot(ys) / denom;
      ++count;  // degenerate flat segments contribute zero correlation
    }
  }
  if (count == 0) throw DataError("stoi: no band segments");
  return sum / static_cast<double>(count);
}

// Log-spectral distance in dB between power spectrograms, the quality proxy
// of the evaluation harness: per frame the RMS over bins of
// 10*log10(clean power / processed power), averaged over frames.
inline double lsd(const Waveform& clean, const Waveform& processed,
                  const AnalysisConfig& cfg) {
  clean.validate();
  processed.validate();
  if (clean.size() != processed.size() || clean.sample_rate != processed.sample_rate)
    throw DataError("lsd: signals must be aligned to equal length and rate");
  const ComplexSpectrogram cs = stft(clean, cfg);
  const ComplexSpectrogram ps = stft(processed, cfg);
  double total = 0.0;
  for (Eigen::Index f = 0; f < cs.frames(); ++f) {
    double acc = 0.0;
    for (Eigen::Index b = 0; b < cs.bins(); ++b) {
      const double pc = std::max(std::norm(cs.values(f, b)), cfg.log_floor);
      const double pp = std::max(std::norm(ps.values(f, b)), cfg.log_floor);
      const double d = 10.0 * std::log10(pc / pp);
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(cs.bins()));
  }
  return total / static_cast<double>(cs.frames());
}

}  // namespace drvk
