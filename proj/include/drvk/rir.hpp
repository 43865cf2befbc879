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

#include <array>
#include <cmath>
#include <vector>

#include "drvk/common.hpp"
#include "drvk/dsp.hpp"
#include "drvk/fft.hpp"

namespace drvk {

// Shoebox room with one source and one receiver, all coordinates in meters.
struct RoomSpec {
  std::array<double, 3> dims{4.0, 4.0, 4.0};
  std::array<double, 3> source{2.0, 3.0, 1.5};
  std::array<double, 3> receiver{2.0, 1.0, 1.5};

  double volume() const { return dims[0] * dims[1] * dims[2]; }
  double surface() const {
    return 2.0 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2]);
  }

  void validate() const {
    for (int i = 0; i < 3; ++i) {
      if (!(dims[i] > 0.0)) throw DataError("room: dimensions must be positive");
      if (!(source[i] > 0.0 && source[i] < dims[i]))
        throw DataError("room: source outside the room");
      if (!(receiver[i] > 0.0 && receiver[i] < dims[i]))
        throw DataError("room: receiver outside the room");
    }
    if (source == receiver) throw DataError("room: source and receiver coincide");
  }
};

struct RirConfig {
  double t60 = 0.6;        // seconds
  int sample_rate = 16000;
  int rir_len = 0;         // taps; 0 = auto (1.25 * t60 * fs)
  double sound_speed = 343.0;
  int max_image_order = -1;  // -1 = auto: ceil(c*t60 / min dim) + 1
};

struct ImpulseResponse {
  std::vector<double> taps;
  int sample_rate = 16000;

  double energy() const {
    double e = 0.0;
    for (double t : taps) e += t * t;
    return e;
  }
};

// Sabine inversion: uniform wall absorption alpha = 0.161*V/(S*t60),
// reflection coefficient beta = sqrt(1 - alpha). Errors when the room
// cannot physically reach the requested decay (alpha >= 1).
inline double reflection_from_t60(const RoomSpec& room, double t60) {
  room.validate();
  if (!(t60 > 0.0)) throw DataError("reflection_from_t60: t60 must be positive");
  const double alpha = 0.161 * room.volume() / (room.surface() * t60);
  if (alpha >= 1.0) throw DataError("unachievable T60 for this room");
  return std::sqrt(1.0 - alpha);
}

namespace detail {

// Eyring inversion. The uniform-reflection image model decays at the Eyring
// rate, so synthesizing with this coefficient makes the measured T60 track
// the requested one; the Sabine value undershoots badly in absorbent rooms.
inline double eyring_reflection(const RoomSpec& room, double t60) {
  const double sabine_alpha = 0.161 * room.volume() / (room.surface() * t60);
  const double alpha = 1.0 - std::exp(-sabine_alpha);
  return std::sqrt(1.0 - alpha);
}

constexpr int kSincHalfWidth = 40;  // 81-tap Hann-windowed sinc per image

// 100 Hz high-pass from the original image-method formulation. Without it
// the all-positive image pulses pile up into a DC ramp that flattens the
// measured decay well before the -25 dB point.
inline void highpass_100hz(std::vector<double>& taps, double fs) {
  const double w = 2.0 * kPi * 100.0 / fs;
  const double r1 = std::exp(-w);
  const double b1 = 2.0 * r1 * std::cos(w);
  const double b2 = -r1 * r1;
  const double a1 = -(1.0 + r1);
  double y0 = 0.0, y1 = 0.0, y2 = 0.0;
  for (double& x : taps) {
    const double x0 = x;
    y2 = y1;
    y1 = y0;
    y0 = b1 * y1 + b2 * y2 + x0;
    x = y0 + a1 * y1 + r1 * y2;
  }
}

inline double windowed_sinc(double u) {
  const double w = 0.5 * (1.0 + std::cos(2.0 * kPi * u / (2 * kSincHalfWidth + 1)));
  if (u == 0.0) return w;
  return w * std::sin(kPi * u) / (kPi * u);
}

// Allen-Berkley image sum with an explicit wall reflection coefficient.
inline ImpulseResponse image_source_rir(const RoomSpec& room, const RirConfig& cfg,
                                        double beta) {
  room.validate();
  if (!(cfg.t60 > 0.0)) throw DataError("rir config: t60 must be positive");
  if (cfg.sample_rate <= 0) throw DataError("rir config: sample rate must be positive");

  const double fs = cfg.sample_rate;
  const double c = cfg.sound_speed;
  const int rir_len = cfg.rir_len > 0
                          ? cfg.rir_len
                          : static_cast<int>(std::ceil(1.25 * cfg.t60 * fs));

  const double min_dim = std::min({room.dims[0], room.dims[1], room.dims[2]});
  const int order = cfg.max_image_order >= 0
                        ? cfg.max_image_order
                        : static_cast<int>(std::ceil(c * cfg.t60 / min_dim)) + 1;

  ImpulseResponse rir;
  rir.sample_rate = cfg.sample_rate;
  rir.taps.assign(rir_len, 0.0);

  // Lattice bounds: images beyond the RIR length cannot contribute.
  const double max_dist = (rir_len + kSincHalfWidth) * c / fs;
  std::array<int, 3> lattice{};
  for (int d = 0; d < 3; ++d) {
    int n = static_cast<int>(std::ceil(max_dist / (2.0 * room.dims[d])));
    lattice[d] = std::min(n, (order + 1) / 2 + 1);
  }

  for (int mx = -lattice[0]; mx <= lattice[0]; ++mx) {
    for (int my = -lattice[1]; my <= lattice[1]; ++my) {
      for (int mz = -lattice[2]; mz <= lattice[2]; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          for (int j = 0; j <= 1; ++j) {
            for (int k = 0; k <= 1; ++k) {
              if (std::abs(2 * mx - q) + std::abs(2 * my - j) + std::abs(2 * mz - k) > order)
                continue;
              const double dx =
                  (1 - 2 * q) * room.source[0] - room.receiver[0] + 2.0 * mx * room.dims[0];
              const double dy =
                  (1 - 2 * j) * room.source[1] - room.receiver[1] + 2.0 * my * room.dims[1];
              const double dz =
                  (1 - 2 * k) * room.source[2] - room.receiver[2] + 2.0 * mz * room.dims[2];
              const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
              const int reflections = std::abs(mx - q) + std::abs(mx) + std::abs(my - j) +
                                      std::abs(my) + std::abs(mz - k) + std::abs(mz);
              const double gain =
                  std::pow(beta, static_cast<double>(reflections)) / (4.0 * kPi * dist);
              const double center = dist / c * fs;
              const int first = static_cast<int>(std::floor(center)) - kSincHalfWidth;
              if (first >= rir_len) continue;
              for (int n = 0; n <= 2 * kSincHalfWidth; ++n) {
                const int idx = first + n;
                if (idx < 0 || idx >= rir_len) continue;
                rir.taps[idx] += gain * windowed_sinc(idx - center);
              }
            }
          }
        }
      }
    }
  }
  return rir;
}

}  // namespace detail

// Image-source RIR for the requested reverberation time. Validates
// achievability with the Sabine bound, synthesizes with the Eyring-matched
// reflection coefficient and applies the image-method high-pass.
// Deterministic for fixed inputs.
inline ImpulseResponse generate_rir(const RoomSpec& room, const RirConfig& cfg) {
  reflection_from_t60(room, cfg.t60);  // achievability check
  ImpulseResponse rir =
      detail::image_source_rir(room, cfg, detail::eyring_reflection(room, cfg.t60));
  detail::highpass_100hz(rir.taps, cfg.sample_rate);
  return rir;
}

// Schroeder backward-integrated decay: fit the -5 dB..-25 dB span of the
// energy decay curve and extrapolate to -60 dB.
inline double measure_t60(const ImpulseResponse& rir) {
  if (rir.taps.empty()) throw DataError("measure_t60: empty impulse response");
  const size_t n = rir.taps.size();
  std::vector<double> edc(n);
  double acc = 0.0;
  for (size_t i = n; i-- > 0;) {
    acc += rir.taps[i] * rir.taps[i];
    edc[i] = acc;
  }
  if (!(acc > 0.0)) throw DataError("measure_t60: impulse response has no energy");

  const double total = acc;
  ptrdiff_t i5 = -1, i25 = -1;
  for (size_t i = 0; i < n; ++i) {
    const double db = 10.0 * std::log10(edc[i] / total + 1e-300);
    if (i5 < 0 && db <= -5.0) i5 = static_cast<ptrdiff_t>(i);
    if (db <= -25.0) {
      i25 = static_cast<ptrdiff_t>(i);
      break;
    }
  }
  if (i5 < 0 || i25 < 0 || i25 <= i5 + 1)
    throw DataError("measure_t60: decay range (-5 dB to -25 dB) not reached");

  // Least-squares line through (sample index, EDC dB) on the fit span.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double count = static_cast<double>(i25 - i5 + 1);
  for (ptrdiff_t i = i5; i <= i25; ++i) {
    const double x = static_cast<double>(i);
    const double y = 10.0 * std::log10(edc[i] / total);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  if (!(slope < 0.0)) throw NumericError("measure_t60: non-decaying energy curve");
  return -60.0 / slope / rir.sample_rate;
}

// Linear convolution truncated to the clean signal's length (alignment at
// lag 0), evaluated via FFT.
inline Waveform convolve(const Waveform& s, const ImpulseResponse& g) {
  s.validate();
  if (g.taps.empty()) throw DataError("convolve: empty impulse response");
  if (s.sample_rate != g.sample_rate)
    throw DataError("convolve: sample-rate mismatch between signal and impulse response");

  const size_t full = s.size() + g.taps.size() - 1;
  const size_t nfft = next_pow2(full);
  std::vector<cdouble> a(nfft, 0.0), b(nfft, 0.0);
  for (size_t i = 0; i < s.size(); ++i) a[i] = s.samples[i];
  for (size_t i = 0; i < g.taps.size(); ++i) b[i] = g.taps[i];
  fft(a);
  fft(b);
  for (size_t i = 0; i < nfft; ++i) a[i] *= b[i];
  ifft(a);

  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(s.size());
  for (size_t i = 0; i < s.size(); ++i) out.samples[i] = a[i].real();
  return out;
}

}  // namespace drvk
