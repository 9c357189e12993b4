// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "selafd/radar/stft.hpp"
#include "selafd/tensor.hpp"

namespace selafd::radar {

struct RasterOptions {
  std::size_t out_size = 32;
  std::size_t channels = 3;
  /// Min-max scale to [0, 1] before standardization.
  bool min_max = true;
  double mean = 0.5;
  double stddev = 0.5;

  /// No min-max, mean 0, stddev 1.
  static RasterOptions identity(std::size_t out_size, std::size_t channels = 1);
};

/// Bilinear resize with corners aligned: when enlarging, output corners
/// equal input corners. When shrinking an axis the triangle kernel is
/// widened by the reduction factor (antialiased bilinear), so no input
/// sample is skipped. `src` is [rows x cols].
Tensor bilinear_resize(const Tensor& src, std::size_t out_rows, std::size_t out_cols);

/// TD map -> [channels x out x out] model input. A constant map becomes
/// all zeros before standardization, never NaN.
Tensor rasterize(const SpectrogramSample& sample, const RasterOptions& options);

/// Binary PGM (P5, maxval 255) of a 2-D tensor after min-max scaling;
/// a constant map is written as all zeros. Rows are written top to bottom
/// in tensor order unless `flip_rows` is set.
void write_pgm(const std::string& path, const Tensor& map, bool flip_rows = false);

}  // namespace selafd::radar
