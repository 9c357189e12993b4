// SPDX-License-Identifier: Apache-2.0
#include "selafd/radar/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "selafd/error.hpp"

namespace selafd::radar {

StftParams StftParams::defaults_for(double sample_rate) {
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  StftParams p;
  p.window_len = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(0.2 * sample_rate)));
  p.hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.05 * static_cast<double>(p.window_len))));
  p.fft_len = std::bit_ceil(p.window_len);
  return p;
}

void StftParams::validate() const {
  if (hop == 0 || hop > window_len || window_len > fft_len)
    throw ConfigError("STFT parameters need 0 < hop <= window_len <= fft_len (hop " + std::to_string(hop) +
                      ", window " + std::to_string(window_len) + ", fft " + std::to_string(fft_len) + ")");
}

std::size_t StftParams::frame_count(std::size_t samples) const {
  return samples < window_len ? 0 : (samples - window_len) / hop + 1;
}

double SpectrogramSample::doppler_of_row(std::size_t row) const {
  const auto n = static_cast<double>(params.fft_len);
  return (static_cast<double>(row) - n / 2.0) * sample_rate / n;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

namespace {

// Owns an in-place FFTW plan and its buffer.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (!buf_) throw std::bad_alloc();
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  fftw_complex* buffer() { return buf_; }
  void execute() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace

std::vector<std::vector<std::complex<double>>> stft_complex(std::span<const std::complex<double>> samples,
                                                            const StftParams& p) {
  p.validate();
  const std::size_t frames = p.frame_count(samples.size());
  if (frames == 0)
    throw InputError("recording of " + std::to_string(samples.size()) + " samples is shorter than one " +
                     std::to_string(p.window_len) + "-sample window");
  const auto window = hann_window(p.window_len);
  FftPlan plan(p.fft_len);
  fftw_complex* buf = plan.buffer();
  const std::size_t half = p.fft_len / 2;
  std::vector<std::vector<std::complex<double>>> out(frames, std::vector<std::complex<double>>(p.fft_len));
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * p.hop;
    for (std::size_t i = 0; i < p.fft_len; ++i) {
      if (i < p.window_len) {
        buf[i][0] = window[i] * samples[start + i].real();
        buf[i][1] = window[i] * samples[start + i].imag();
      } else {
        buf[i][0] = buf[i][1] = 0.0;
      }
    }
    plan.execute();
    // fft-shift: row r <- bin (r + N - N/2) mod N, so row N/2 is DC
    for (std::size_t r = 0; r < p.fft_len; ++r) {
      const std::size_t k = (r + p.fft_len - half) % p.fft_len;
      out[t][r] = {buf[k][0], buf[k][1]};
    }
  }
  return out;
}

SpectrogramSample stft_samples(std::span<const std::complex<double>> samples, double sample_rate,
                               const StftParams& params, const SpectrogramOptions& options) {
  if (!(sample_rate > 0.0)) throw InputError("sample rate must be positive");
  const auto frames = stft_complex(samples, params);
  SpectrogramSample s;
  s.params = params;
  s.sample_rate = sample_rate;
  s.dynamic_range_db = options.dynamic_range_db;
  s.td = Tensor({params.fft_len, frames.size()});
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t r = 0; r < params.fft_len; ++r) {
      const double db = 20.0 * std::log10(std::abs(frames[t][r]) + options.epsilon);
      s.td.at(r, t) = db;
      peak = std::max(peak, db);
    }
  }
  const double floor = peak - options.dynamic_range_db;
  for (double& v : s.td.data()) v = std::max(v, floor);
  return s;
}

SpectrogramSample stft(const CwRecording& rec, const StftParams& params, const SpectrogramOptions& options) {
  SpectrogramSample s = stft_samples(rec.samples, rec.sample_rate, params, options);
  s.label = static_cast<int>(rec.label);
  s.source_id = rec.source_id;
  return s;
}

}  // namespace selafd::radar
