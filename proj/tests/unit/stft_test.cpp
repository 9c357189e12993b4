// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "oracles.hpp"
#include "selafd/error.hpp"
#include "selafd/radar/stft.hpp"

namespace selafd::radar {
namespace {

std::vector<std::complex<double>> tone(double f, double fs, std::size_t n, double phase = 0.3) {
  std::vector<std::complex<double>> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = std::polar(1.0, 2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + phase);
  return x;
}

TEST(StftParams, Defaults) {
  const StftParams p = StftParams::defaults_for(320.0);
  EXPECT_EQ(p.window_len, 64u);
  EXPECT_EQ(p.hop, 3u);
  EXPECT_EQ(p.fft_len, 64u);
  const StftParams q = StftParams::defaults_for(1000.0);
  EXPECT_EQ(q.window_len, 200u);
  EXPECT_EQ(q.hop, 10u);
  EXPECT_EQ(q.fft_len, 256u);
}

TEST(StftParams, Validation) {
  EXPECT_THROW((StftParams{64, 0, 64}.validate()), ConfigError);
  EXPECT_THROW((StftParams{64, 65, 128}.validate()), ConfigError);
  EXPECT_THROW((StftParams{64, 3, 32}.validate()), ConfigError);
}

TEST(Stft, FrameCountFormula) {
  const StftParams p{64, 3, 64};
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t len = 64 + rng.below(500);
    std::vector<std::complex<double>> x(len, {1.0, 0.0});
    EXPECT_EQ(stft_complex(x, p).size(), (len - 64) / 3 + 1);
  }
}

TEST(Stft, TooShortIsAnInputError) {
  std::vector<std::complex<double>> x(63);
  EXPECT_THROW(stft_complex(x, StftParams{64, 3, 64}), InputError);
}

TEST(Stft, BinCenteredToneRidge) {
  const double fs = 320.0;
  const StftParams p{64, 3, 64};
  const auto x = tone(25.0, fs, 1280);  // bin +5
  const SpectrogramSample s = stft_samples(x, fs, p);
  const std::size_t expect_row = 32 + 5;
  EXPECT_DOUBLE_EQ(s.doppler_of_row(expect_row), 25.0);
  for (std::size_t t = 0; t < s.td.dim(1); ++t) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < 64; ++r)
      if (s.td.at(r, t) > s.td.at(best, t)) best = r;
    ASSERT_EQ(best, expect_row) << "frame " << t;
    for (std::size_t r = 0; r < 64; ++r)
      if (r + 1 < expect_row || r > expect_row + 1) ASSERT_LT(s.td.at(r, t), s.td.at(best, t) - 31.0);
  }
}

TEST(Stft, MatchesDirectDft) {
  const StftParams p{48, 7, 64};
  Rng rng(2);
  std::vector<std::complex<double>> x(300);
  for (auto& v : x) v = {rng.normal(), rng.normal()};
  const auto frames = stft_complex(x, p);
  const auto w = hann_window(48);
  for (std::size_t t = 0; t < frames.size(); t += 5) {
    std::vector<std::complex<double>> buf(64, 0.0);
    for (std::size_t i = 0; i < 48; ++i) buf[i] = w[i] * x[t * 7 + i];
    const auto ref = testing::shifted_dft(buf);
    for (std::size_t r = 0; r < 64; ++r) EXPECT_LT(std::abs(frames[t][r] - ref[r]), 1e-9 * (1.0 + std::abs(ref[r])));
  }
}

TEST(Stft, ParsevalPerFrame) {
  const StftParams p{64, 3, 64};
  Rng rng(3);
  std::vector<std::complex<double>> x(500);
  for (auto& v : x) v = {rng.normal(), rng.normal()};
  const auto frames = stft_complex(x, p);
  const auto w = hann_window(64);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    double time_energy = 0.0, freq_energy = 0.0;
    for (std::size_t i = 0; i < 64; ++i) time_energy += std::norm(w[i] * x[t * 3 + i]);
    for (const auto& v : frames[t]) freq_energy += std::norm(v);
    ASSERT_NEAR(freq_energy / 64.0, time_energy, 1e-9 * time_energy);
  }
}

TEST(Stft, ConjugateFlipsDopplerAxis) {
  const double fs = 320.0;
  const StftParams p{64, 3, 64};
  auto x = tone(37.0, fs, 700);
  const auto y = tone(-81.0, fs, 700, 1.1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.5 * y[i];
  std::vector<std::complex<double>> xc(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xc[i] = std::conj(x[i]);
  const SpectrogramSample a = stft_samples(x, fs, p);
  const SpectrogramSample b = stft_samples(xc, fs, p);
  const double floor = -180.0;
  for (std::size_t t = 0; t < a.td.dim(1); ++t)
    for (std::size_t r = 1; r < 64; ++r) {
      const double va = a.td.at(r, t), vb = b.td.at(64 - r, t);
      if (va > floor || vb > floor) ASSERT_NEAR(va, vb, 1e-6) << "row " << r << " frame " << t;
    }
}

TEST(Stft, ZeroSignalIsUniformFloor) {
  std::vector<std::complex<double>> x(200, 0.0);
  const SpectrogramSample s = stft_samples(x, 320.0, StftParams{64, 3, 64});
  for (double v : s.td.data()) EXPECT_DOUBLE_EQ(v, 20.0 * std::log10(1e-12));
}

TEST(Stft, DynamicRangeClip) {
  auto x = tone(25.0, 320.0, 400);
  SpectrogramOptions o;
  o.dynamic_range_db = 40.0;
  const SpectrogramSample s = stft_samples(x, 320.0, StftParams{64, 3, 64}, o);
  const double peak = *std::max_element(s.td.data().begin(), s.td.data().end());
  const double low = *std::min_element(s.td.data().begin(), s.td.data().end());
  EXPECT_NEAR(low, peak - 40.0, 1e-9);
  for (double v : s.td.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Stft, HannIsPeriodic) {
  const auto w = hann_window(8);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[4], 1.0);
  EXPECT_NEAR(w[2], 0.5, 1e-15);
}

}  // namespace
}  // namespace selafd::radar
