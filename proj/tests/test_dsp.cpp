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

#include "drvk/dsp.hpp"
#include "drvk/rng.hpp"
#include "oracles.hpp"

using namespace drvk;

namespace {

Waveform random_noise(uint64_t seed, size_t n, int rate = 16000) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (auto& s : w.samples) s = rng.uniform(-0.5, 0.5);
  return w;
}

double interior_rel_error(const Waveform& a, const Waveform& b, size_t margin) {
  EXPECT_EQ(a.size(), b.size());
  double num = 0.0, den = 0.0;
  for (size_t i = margin; i + margin < a.size(); ++i) {
    const double d = a.samples[i] - b.samples[i];
    num += d * d;
    den += a.samples[i] * a.samples[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(Stft, SilenceGivesZeroFramesWithDefaultShape) {
  Waveform w;
  w.samples.assign(16000, 0.0);
  const auto spec = stft(w, AnalysisConfig{});
  EXPECT_EQ(spec.frames(), 61);
  EXPECT_EQ(spec.bins(), 257);
  EXPECT_NEAR(spec.values.cwiseAbs().maxCoeff(), 0.0, 0.0);
}

TEST(Stft, SinusoidPeaksAtExpectedBin) {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (size_t i = 0; i < w.size(); ++i)
    w.samples[i] = 0.7 * std::sin(2.0 * kPi * 1000.0 * i / 16000.0);
  const auto spec = stft(w, AnalysisConfig{});
  for (Eigen::Index f = 0; f < spec.frames(); ++f) {
    Eigen::Index peak = 0;
    spec.values.row(f).cwiseAbs().maxCoeff(&peak);
    EXPECT_EQ(peak, 32);  // 1000/16000*512
  }
}

TEST(Stft, MatchesDirectDftOracle) {
  const AnalysisConfig cfg;
  const Waveform w = random_noise(7, 16000);
  const auto spec = stft(w, cfg);
  const auto ref = oracle::stft_dft(w.samples, cfg);
  ASSERT_EQ(spec.frames(), ref.rows());
  ASSERT_EQ(spec.bins(), ref.cols());
  EXPECT_LT((spec.values - ref).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Stft, ShortInputZeroPadsToOneFrame) {
  const auto spec = stft(random_noise(3, 100), AnalysisConfig{});
  EXPECT_EQ(spec.frames(), 1);
}

TEST(Stft, RejectsBadInput) {
  EXPECT_THROW(stft(Waveform{}, AnalysisConfig{}), DataError);
  Waveform w = random_noise(1, 1000);
  w.samples[10] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(stft(w, AnalysisConfig{}), DataError);
  AnalysisConfig bad;
  bad.hop = 0;
  EXPECT_THROW(stft(random_noise(1, 1000), bad), DataError);
}

TEST(Istft, RoundTripInterior) {
  const Waveform w = random_noise(11, 16000);
  const auto back = istft(stft(w, AnalysisConfig{}), w.size());
  EXPECT_LT(interior_rel_error(w, back, 512), 1e-6);
}

TEST(Istft, ZeroSpectrogramGivesSilence) {
  ComplexSpectrogram spec;
  spec.values = ComplexMatrix::Zero(10, 257);
  const auto w = istft(spec, 3000);
  EXPECT_EQ(w.size(), 3000u);
  for (double s : w.samples) EXPECT_EQ(s, 0.0);
}

TEST(Istft, SynthesisIsLinearInMagnitude) {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (size_t i = 0; i < w.size(); ++i)
    w.samples[i] = 0.3 * std::sin(2.0 * kPi * 750.0 * i / 16000.0);
  auto spec = stft(w, AnalysisConfig{});
  spec.values *= 2.0;
  const auto doubled = istft(spec, w.size());
  Waveform expect = w;
  for (auto& s : expect.samples) s *= 2.0;
  EXPECT_LT(interior_rel_error(expect, doubled, 512), 1e-3);
}

TEST(Istft, RejectsInconsistentShape) {
  ComplexSpectrogram spec;
  spec.values = ComplexMatrix::Zero(4, 100);  // default config expects 257 bins
  EXPECT_THROW(istft(spec, 1000), DataError);
}

TEST(Lps, FloorAndUnitAndExp) {
  ComplexSpectrogram spec;
  spec.values = ComplexMatrix::Zero(1, 3);
  spec.values(0, 1) = cdouble(1.0, 0.0);
  spec.values(0, 2) = cdouble(std::exp(1.0), 0.0);
  const Matrix m = lps(spec);
  EXPECT_NEAR(m(0, 0), std::log(1e-12), 1e-12);
  EXPECT_NEAR(m(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(m(0, 2), 2.0, 1e-12);
}

TEST(Lps, MonotoneAndBounded) {
  Rng rng(5);
  ComplexSpectrogram spec;
  spec.values.resize(4, 8);
  for (Eigen::Index f = 0; f < 4; ++f)
    for (Eigen::Index b = 0; b < 8; ++b)
      spec.values(f, b) = std::polar(rng.uniform(0.0, 2.0), rng.uniform(0.0, 2 * kPi));
  const Matrix m = lps(spec);
  for (Eigen::Index f = 0; f < 4; ++f)
    for (Eigen::Index b = 0; b < 8; ++b) {
      EXPECT_GE(m(f, b), std::log(1e-12) - 1e-12);
      if (b > 0 && std::abs(spec.values(f, b)) > std::abs(spec.values(f, b - 1)))
        EXPECT_GE(m(f, b), m(f, b - 1));
    }
}

TEST(Splice, SingleFrameFullyReplicates) {
  Matrix one(1, 257);
  Rng rng(2);
  for (Eigen::Index i = 0; i < 257; ++i) one(0, i) = rng.uniform();
  const Matrix s = splice(one, 5);
  ASSERT_EQ(s.cols(), 2827);
  for (int rep = 0; rep < 11; ++rep)
    EXPECT_TRUE(s.block(0, rep * 257, 1, 257).isApprox(one, 0.0));
}

TEST(Splice, ZeroRadiusIsIdentity) {
  Matrix m = Matrix::Random(7, 5);
  EXPECT_TRUE(splice(m, 0).isApprox(m, 0.0));
}

TEST(Splice, EdgeReplicationHandEnumerated) {
  Matrix m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  const Matrix s = splice(m, 1);
  ASSERT_EQ(s.rows(), 3);
  ASSERT_EQ(s.cols(), 6);
  Matrix expect(3, 6);
  expect << 1, 2, 1, 2, 3, 4,  // [r0 r0 r1]
      1, 2, 3, 4, 5, 6,        // [r0 r1 r2]
      3, 4, 5, 6, 5, 6;        // [r1 r2 r2]
  EXPECT_TRUE(s.isApprox(expect, 0.0));
}

TEST(RestoreSpectrum, UnitMagnitudePhaseCarrier) {
  Rng rng(9);
  ComplexSpectrogram phase;
  phase.values.resize(3, 9);
  for (Eigen::Index f = 0; f < 3; ++f)
    for (Eigen::Index b = 0; b < 9; ++b)
      phase.values(f, b) = std::polar(1.0, rng.uniform(-kPi, kPi));
  const Matrix zeros = Matrix::Zero(3, 9);
  const auto restored = restore_spectrum(zeros, phase);
  EXPECT_LT((restored.values - phase.values).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RestoreSpectrum, InverseOfLpsAboveFloor) {
  Rng rng(13);
  ComplexSpectrogram spec;
  spec.values.resize(5, 17);
  for (Eigen::Index f = 0; f < 5; ++f)
    for (Eigen::Index b = 0; b < 17; ++b)
      spec.values(f, b) = std::polar(rng.uniform(1e-3, 2.0), rng.uniform(-kPi, kPi));
  const auto restored = restore_spectrum(lps(spec), spec);
  EXPECT_LT((restored.values - spec.values).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RestoreSpectrum, MagnitudeIsExpHalfLps) {
  ComplexSpectrogram phase;
  phase.values = ComplexMatrix::Constant(1, 1, cdouble(0.5, 0.0));
  Matrix est(1, 1);
  est(0, 0) = 2.0;
  const auto restored = restore_spectrum(est, phase);
  EXPECT_NEAR(restored.values(0, 0).real(), std::exp(1.0), 1e-12);
  EXPECT_NEAR(restored.values(0, 0).imag(), 0.0, 1e-15);
}

TEST(RestoreSpectrum, RejectsShapeMismatch) {
  ComplexSpectrogram phase;
  phase.values = ComplexMatrix::Zero(2, 3);
  EXPECT_THROW(restore_spectrum(Matrix::Zero(2, 4), phase), DataError);
}

TEST(DereverbPipeline, IdentityModelReconstructs) {
  const AnalysisConfig cfg;
  const Waveform w = random_noise(21, 24000);
  const FrameMapper identity = [&cfg](const Matrix& spliced) {
    return Matrix(spliced.middleCols(cfg.context_radius * cfg.bins(), cfg.bins()));
  };
  const Waveform out = dereverb_pipeline(w, identity, cfg);
  ASSERT_EQ(out.size(), w.size());
  EXPECT_LT(interior_rel_error(w, out, 512), 1e-3);
}

TEST(DereverbPipeline, FloorModelGivesSilence) {
  const AnalysisConfig cfg;
  const Waveform w = random_noise(22, 16000);
  const FrameMapper floor_model = [&cfg](const Matrix& spliced) {
    return Matrix::Constant(spliced.rows(), cfg.bins(), std::log(cfg.log_floor));
  };
  const Waveform out = dereverb_pipeline(w, floor_model, cfg);
  double rms = 0.0;
  for (double s : out.samples) rms += s * s;
  rms = std::sqrt(rms / out.size());
  EXPECT_LT(rms, 1e-5);
}

TEST(DereverbPipeline, LengthContractHoldsForOddLengths) {
  const AnalysisConfig cfg;
  const FrameMapper identity = [&cfg](const Matrix& spliced) {
    return Matrix(spliced.middleCols(cfg.context_radius * cfg.bins(), cfg.bins()));
  };
  for (size_t len : {777u, 5000u, 16001u}) {
    const Waveform w = random_noise(len, len);
    EXPECT_EQ(dereverb_pipeline(w, identity, cfg).size(), len);
  }
}

TEST(AnalysisConfig, DefaultDimensionsMatchPaperShape) {
  const AnalysisConfig cfg;
  EXPECT_EQ(cfg.bins(), 257);
  EXPECT_EQ(cfg.spliced_dim(), 2827);
}
