// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "selafd/radar/recording.hpp"
#include "selafd/tensor.hpp"

namespace selafd::radar {

struct StftParams {
  std::size_t window_len = 64;
  std::size_t hop = 3;
  std::size_t fft_len = 64;

  /// 0.2 s Hann window, 95% overlap, fft_len the next power of two.
  static StftParams defaults_for(double sample_rate);
  /// Throws ConfigError unless 0 < hop <= window_len <= fft_len.
  void validate() const;
  std::size_t frame_count(std::size_t samples) const;

  friend bool operator==(const StftParams&, const StftParams&) = default;
};

struct SpectrogramOptions {
  /// Values more than this far below the map peak are clipped to it.
  double dynamic_range_db = 60.0;
  /// Added to |X| before the logarithm.
  double epsilon = 1e-12;
};

/// Time-Doppler map: dB magnitudes [fft_len x frames]. Row r holds the
/// Doppler frequency (r - fft_len/2) * fs / fft_len, so rows run from
/// negative to positive Doppler; column t is frame t.
struct SpectrogramSample {
  Tensor td;
  int label = 0;
  StftParams params;
  double sample_rate = 0.0;
  double dynamic_range_db = 60.0;
  std::string source_id;

  double doppler_of_row(std::size_t row) const;
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Centered complex STFT: frames[t][r] with the same row convention as
/// SpectrogramSample. Throws InputError when fewer samples than one window.
std::vector<std::vector<std::complex<double>>> stft_complex(std::span<const std::complex<double>> samples,
                                                            const StftParams& params);

SpectrogramSample stft_samples(std::span<const std::complex<double>> samples, double sample_rate,
                               const StftParams& params, const SpectrogramOptions& options = {});

/// 20 log10(|X| + eps) with the dynamic-range clip; label copied from the
/// recording.
SpectrogramSample stft(const CwRecording& rec, const StftParams& params, const SpectrogramOptions& options = {});

}  // namespace selafd::radar
