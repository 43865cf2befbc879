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

#include <numeric>
#include <vector>

#include "drvk/common.hpp"
#include "drvk/dsp.hpp"

namespace drvk {

// Rational-ratio polyphase resampler with a Hann-windowed sinc kernel.
// Output sample m sits at input position m*M/L (after gcd reduction); each of
// the L fractional phases gets a precomputed tap set, normalized to unit DC
// gain.
inline Waveform resample(const Waveform& in, int target_rate) {
  in.validate();
  if (target_rate <= 0) throw DataError("resample: target rate must be positive");
  if (target_rate == in.sample_rate) return in;

  const int g = std::gcd(in.sample_rate, target_rate);
  const int up = target_rate / g;    // L
  const int down = in.sample_rate / g;  // M

  // Anti-aliasing cutoff in cycles per input sample.
  const double cutoff = 0.5 * std::min(1.0, static_cast<double>(up) / down);
  const int half_width = 24 * std::max(1, (down + up - 1) / up);  // input samples

  std::vector<std::vector<double>> phase_taps(up);
  for (int p = 0; p < up; ++p) {
    const double center_frac = static_cast<double>(p) / up;
    auto& taps = phase_taps[p];
    taps.resize(2 * half_width + 1);
    double sum = 0.0;
    for (int j = -half_width; j <= half_width; ++j) {
      const double u = j - center_frac;
      const double window = 0.5 * (1.0 + std::cos(kPi * u / (half_width + 1)));
      const double s =
          u == 0.0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * u) / (kPi * u);
      taps[j + half_width] = s * window;
      sum += taps[j + half_width];
    }
    for (double& t : taps) t /= sum;
  }

  const size_t out_len =
      (in.size() * static_cast<size_t>(up) + down - 1) / static_cast<size_t>(down);
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(out_len, 0.0);
  for (size_t m = 0; m < out_len; ++m) {
    const uint64_t num = static_cast<uint64_t>(m) * down;
    const size_t base = static_cast<size_t>(num / up);
    const int phase = static_cast<int>(num % up);
    const auto& taps = phase_taps[phase];
    double acc = 0.0;
    for (int j = -half_width; j <= half_width; ++j) {
      const ptrdiff_t idx = static_cast<ptrdiff_t>(base) + j;
      if (idx < 0 || idx >= static_cast<ptrdiff_t>(in.size())) continue;
      acc += in.samples[idx] * taps[j + half_width];
    }
    out.samples[m] = acc;
  }
  return out;
}

}  // namespace drvk
