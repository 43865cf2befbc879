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
#include "drvk/dsp.hpp"
#include "drvk/rng.hpp"

namespace drvk {

namespace detail {

// Two-pole resonator (formant) filter applied in place.
class Resonator {
 public:
  Resonator(double freq_hz, double bandwidth_hz, double fs) {
    const double r = std::exp(-kPi * bandwidth_hz / fs);
    a1_ = -2.0 * r * std::cos(2.0 * kPi * freq_hz / fs);
    a2_ = r * r;
    gain_ = 1.0 + a1_ + a2_;  // unit response near DC of the envelope
  }

  double process(double x) {
    const double y = gain_ * x - a1_ * y1_ - a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_, a2_, gain_;
  double y1_ = 0.0, y2_ = 0.0;
};

}  // namespace detail

// Synthetic "pseudo-speech": a seeded sequence of voiced syllables (glottal
// pulse trains with drifting pitch shaped by three formant resonators) and
// unvoiced noise bursts, separated by short silences. It is not speech, but
// it has speech-like spectro-temporal structure: harmonics, formants,
// syllabic energy modulation and pauses, which is what the dereverberation
// models and the band-envelope metrics operate on.
inline Waveform make_pseudo_speech(uint64_t seed, double duration_s, int sample_rate = 16000) {
  if (!(duration_s > 0.0)) throw DataError("pseudo speech: duration must be positive");
  Rng rng(seed);
  const double fs = sample_rate;
  const size_t total = static_cast<size_t>(duration_s * fs);
  std::vector<double> out(total, 0.0);

  size_t cursor = static_cast<size_t>(rng.uniform(0.005, 0.03) * fs);
  while (cursor < total) {
    const size_t len = static_cast<size_t>(rng.uniform(0.12, 0.26) * fs);
    const bool voiced = rng.uniform() < 0.78;
    std::vector<double> syl(len, 0.0);

    if (voiced) {
      const double f0_start = rng.uniform(95.0, 185.0);
      const double f0_end = f0_start * rng.uniform(0.85, 1.2);
      detail::Resonator f1(rng.uniform(320.0, 820.0), 90.0, fs);
      detail::Resonator f2(rng.uniform(1000.0, 2200.0), 130.0, fs);
      detail::Resonator f3(rng.uniform(2450.0, 3250.0), 180.0, fs);
      double phase = 1.0;  // fire a pulse immediately
      for (size_t i = 0; i < len; ++i) {
        const double frac = static_cast<double>(i) / len;
        const double f0 = f0_start + (f0_end - f0_start) * frac;
        phase += f0 / fs;
        double x = 0.02 * rng.normal();  // aspiration noise
        if (phase >= 1.0) {
          phase -= 1.0;
          x += rng.uniform(0.9, 1.1);
        }
        syl[i] = f3.process(f2.process(f1.process(x)));
      }
    } else {
      detail::Resonator band(rng.uniform(1400.0, 4200.0), rng.uniform(400.0, 900.0), fs);
      for (size_t i = 0; i < len; ++i) syl[i] = band.process(rng.normal());
    }

    // Raised-cosine attack/release envelope and per-syllable level.
    const size_t attack = std::min(len / 2, static_cast<size_t>(0.02 * fs));
    const size_t release = std::min(len / 2, static_cast<size_t>(0.04 * fs));
    for (size_t i = 0; i < attack; ++i)
      syl[i] *= 0.5 * (1.0 - std::cos(kPi * i / attack));
    for (size_t i = 0; i < release; ++i)
      syl[len - 1 - i] *= 0.5 * (1.0 - std::cos(kPi * i / release));
    double peak = 0.0;
    for (double v : syl) peak = std::max(peak, std::abs(v));
    const double target = voiced ? rng.uniform(0.55, 1.0) : rng.uniform(0.25, 0.5);
    const double scale = peak > 0.0 ? target / peak : 0.0;
    for (size_t i = 0; i < len && cursor + i < total; ++i) out[cursor + i] += syl[i] * scale;

    cursor += len + static_cast<size_t>(rng.uniform(0.02, 0.09) * fs);
  }

  // DC blocker, then normalize to 0.45 peak.
  double x1 = 0.0, y1 = 0.0;
  for (double& v : out) {
    const double y = v - x1 + 0.995 * y1;
    x1 = v;
    y1 = y;
    v = y;
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= 0.45 / peak;

  return Waveform{std::move(out), sample_rate};
}

}  // namespace drvk
