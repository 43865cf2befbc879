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

#include "drvk/rir.hpp"
#include "drvk/rng.hpp"
#include "oracles.hpp"

using namespace drvk;

namespace {

RoomSpec paper_room(int which) {
  RoomSpec r;
  if (which == 0) {
    r.dims = {4.0, 4.0, 4.0};
    r.source = {1.2, 2.8, 1.6};
    r.receiver = {2.9, 1.4, 1.9};
  } else if (which == 1) {
    r.dims = {6.0, 6.0, 4.0};
    r.source = {1.8, 4.3, 1.7};
    r.receiver = {4.2, 2.0, 1.5};
  } else {
    r.dims = {10.0, 10.0, 8.0};
    r.source = {3.1, 7.2, 2.2};
    r.receiver = {6.8, 3.5, 1.8};
  }
  return r;
}

}  // namespace

TEST(ReflectionFromT60, HandEvaluatedSabine) {
  RoomSpec room = paper_room(1);  // 6x6x4: V=144, S=168
  // alpha = 0.161*144/(168*0.6) = 0.22999..., beta = sqrt(1-alpha)
  EXPECT_NEAR(reflection_from_t60(room, 0.6), 0.87750, 5e-5);
}

TEST(ReflectionFromT60, LosslessLimit) {
  EXPECT_GT(reflection_from_t60(paper_room(0), 1e6), 0.999999);
  EXPECT_LT(reflection_from_t60(paper_room(0), 1e6), 1.0);
}

TEST(ReflectionFromT60, UnachievableT60Throws) {
  EXPECT_THROW(reflection_from_t60(paper_room(0), 0.01), DataError);
}

TEST(GenerateRir, DirectPathDelayMatchesGeometry) {
  for (int which = 0; which < 3; ++which) {
    const RoomSpec room = paper_room(which);
    RirConfig cfg;
    cfg.t60 = 0.5;
    const ImpulseResponse rir = generate_rir(room, cfg);
    double dist = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = room.source[i] - room.receiver[i];
      dist += d * d;
    }
    dist = std::sqrt(dist);
    const int expected = static_cast<int>(std::lround(dist / cfg.sound_speed * cfg.sample_rate));
    int first = -1;
    for (size_t i = 0; i < rir.taps.size(); ++i)
      if (std::abs(rir.taps[i]) > 1e-12) {
        first = static_cast<int>(i);
        break;
      }
    ASSERT_GE(first, 0);
    EXPECT_NEAR(first, expected, 41);
    EXPECT_LE(expected - first, 41);  // nothing arrives before the direct path
  }
}

TEST(GenerateRir, ZeroReflectionKeepsOnlyDirectPulse) {
  const RoomSpec room = paper_room(0);
  RirConfig cfg;
  cfg.t60 = 0.5;
  const ImpulseResponse rir = detail::image_source_rir(room, cfg, 0.0);
  double dist = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = room.source[i] - room.receiver[i];
    dist += d * d;
  }
  const int center =
      static_cast<int>(std::lround(std::sqrt(dist) / cfg.sound_speed * cfg.sample_rate));
  for (size_t i = 0; i < rir.taps.size(); ++i) {
    if (static_cast<int>(i) < center - 41 || static_cast<int>(i) > center + 41)
      EXPECT_EQ(rir.taps[i], 0.0) << "unexpected energy at tap " << i;
  }
  EXPECT_GT(rir.energy(), 0.0);
}

TEST(GenerateRir, DeterministicForFixedInputs) {
  RirConfig cfg;
  cfg.t60 = 0.4;
  const ImpulseResponse a = generate_rir(paper_room(1), cfg);
  const ImpulseResponse b = generate_rir(paper_room(1), cfg);
  ASSERT_EQ(a.taps.size(), b.taps.size());
  for (size_t i = 0; i < a.taps.size(); ++i) EXPECT_EQ(a.taps[i], b.taps[i]);
}

TEST(GenerateRir, MeasuredT60WithinTwentyPercentOnPaperGrid) {
  for (int which = 0; which < 3; ++which) {
    for (double t60 : {0.3, 0.6, 0.9}) {
      RirConfig cfg;
      cfg.t60 = t60;
      const ImpulseResponse rir = generate_rir(paper_room(which), cfg);
      const double measured = measure_t60(rir);
      EXPECT_NEAR(measured, t60, 0.2 * t60)
          << "room " << which << " T60 " << t60 << " measured " << measured;
    }
  }
}

TEST(MeasureT60, SyntheticExponentialDecay) {
  // Amplitude e^{-n/tau} decays 60 dB in energy at n60 = 6.9078 * tau.
  const int fs = 16000;
  const double target = 0.5;
  const double tau = target * fs / 6.907755;
  Rng rng(3);
  ImpulseResponse rir;
  rir.sample_rate = fs;
  rir.taps.resize(static_cast<size_t>(0.8 * fs));
  for (size_t n = 0; n < rir.taps.size(); ++n)
    rir.taps[n] = std::exp(-static_cast<double>(n) / tau) * rng.normal();
  EXPECT_NEAR(measure_t60(rir), target, 0.05);
}

TEST(MeasureT60, PureImpulseHasNoDecaySpan) {
  ImpulseResponse rir;
  rir.taps.assign(1000, 0.0);
  rir.taps[0] = 1.0;
  EXPECT_THROW(measure_t60(rir), DataError);
}

TEST(MeasureT60, ScaleInvariant) {
  Rng rng(4);
  ImpulseResponse rir;
  rir.taps.resize(8000);
  for (size_t n = 0; n < rir.taps.size(); ++n)
    rir.taps[n] = std::exp(-static_cast<double>(n) / 1000.0) * rng.normal();
  ImpulseResponse doubled = rir;
  for (double& t : doubled.taps) t *= 2.0;
  EXPECT_EQ(measure_t60(rir), measure_t60(doubled));
}

TEST(Convolve, DeltaIsIdentity) {
  Rng rng(6);
  Waveform s;
  s.samples.resize(500);
  for (auto& v : s.samples) v = rng.uniform(-1.0, 1.0);
  ImpulseResponse g;
  g.taps = {1.0};
  const Waveform out = convolve(s, g);
  ASSERT_EQ(out.size(), s.size());
  for (size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out.samples[i], s.samples[i], 1e-12);
}

TEST(Convolve, ShiftedDeltaDelays) {
  Rng rng(8);
  Waveform s;
  s.samples.resize(300);
  for (auto& v : s.samples) v = rng.uniform(-1.0, 1.0);
  ImpulseResponse g;
  g.taps.assign(40, 0.0);
  g.taps[25] = 1.0;
  const Waveform out = convolve(s, g);
  for (size_t i = 0; i < 25; ++i) EXPECT_NEAR(out.samples[i], 0.0, 1e-12);
  for (size_t i = 25; i < s.size(); ++i)
    EXPECT_NEAR(out.samples[i], s.samples[i - 25], 1e-12);
}

TEST(Convolve, MatchesDirectConvolution) {
  Rng rng(10);
  Waveform s;
  s.samples.resize(1000);
  for (auto& v : s.samples) v = rng.uniform(-1.0, 1.0);
  ImpulseResponse g;
  g.taps.resize(200);
  for (auto& v : g.taps) v = rng.uniform(-1.0, 1.0);
  const Waveform fast = convolve(s, g);
  const auto direct = oracle::convolve_direct(s.samples, g.taps);
  for (size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(fast.samples[i], direct[i], 1e-9);
}

TEST(Convolve, LinearInTheSignal) {
  Rng rng(12);
  Waveform s1, s2;
  s1.samples.resize(600);
  s2.samples.resize(600);
  for (auto& v : s1.samples) v = rng.uniform(-1.0, 1.0);
  for (auto& v : s2.samples) v = rng.uniform(-1.0, 1.0);
  ImpulseResponse g;
  g.taps.resize(100);
  for (auto& v : g.taps) v = rng.uniform(-1.0, 1.0);

  Waveform mix;
  mix.samples.resize(600);
  const double a = 0.7, b = -1.3;
  for (size_t i = 0; i < 600; ++i) mix.samples[i] = a * s1.samples[i] + b * s2.samples[i];
  const Waveform lhs = convolve(mix, g);
  const Waveform r1 = convolve(s1, g), r2 = convolve(s2, g);
  for (size_t i = 0; i < 600; ++i)
    EXPECT_NEAR(lhs.samples[i], a * r1.samples[i] + b * r2.samples[i], 1e-9);
}

TEST(Convolve, RejectsSampleRateMismatch) {
  Waveform s;
  s.samples.assign(100, 0.1);
  s.sample_rate = 16000;
  ImpulseResponse g;
  g.taps = {1.0};
  g.sample_rate = 8000;
  EXPECT_THROW(convolve(s, g), DataError);
}
