// SPDX-License-Identifier: Apache-2.0
#include "selafd/radar/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "selafd/error.hpp"

namespace selafd::radar {

RasterOptions RasterOptions::identity(std::size_t out_size, std::size_t channels) {
  RasterOptions o;
  o.out_size = out_size;
  o.channels = channels;
  o.min_max = false;
  o.mean = 0.0;
  o.stddev = 1.0;
  return o;
}

namespace {

// Per-output-index weights of a triangle filter along one axis. Source
// coordinates are corner-aligned; when shrinking, the kernel is widened by
// the reduction factor so every input sample contributes.
struct AxisTaps {
  std::vector<std::size_t> first;
  std::vector<std::vector<double>> weights;
};

AxisTaps axis_taps(std::size_t in_n, std::size_t out_n) {
  AxisTaps taps;
  const double step = (out_n > 1 && in_n > 1) ? static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1) : 0.0;
  const double support = std::max(1.0, step);
  for (std::size_t o = 0; o < out_n; ++o) {
    const double center = static_cast<double>(o) * step;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - support)) + 1;
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + support)) - 1;
    const std::size_t first = static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0));
    const std::size_t last = static_cast<std::size_t>(std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(in_n) - 1));
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
      const double x = 1.0 - std::abs(static_cast<double>(i) - center) / support;
      w.push_back(std::max(0.0, x));
      total += w.back();
    }
    for (double& v : w) v /= total;
    taps.first.push_back(first);
    taps.weights.push_back(std::move(w));
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& src, std::size_t out_rows, std::size_t out_cols) {
  if (src.rank() != 2) throw DimensionError("bilinear_resize expects a matrix, got " + shape_string(src.shape()));
  if (out_rows == 0 || out_cols == 0) throw DimensionError("bilinear_resize output must be non-empty");
  const std::size_t rows = src.dim(0), cols = src.dim(1);
  const AxisTaps rt = axis_taps(rows, out_rows);
  const AxisTaps ct = axis_taps(cols, out_cols);
  Tensor mid({rows, out_cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      const auto& w = ct.weights[c];
      for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * src.at(r, ct.first[c] + k);
      mid.at(r, c) = acc;
    }
  Tensor out({out_rows, out_cols});
  for (std::size_t r = 0; r < out_rows; ++r) {
    const auto& w = rt.weights[r];
    for (std::size_t k = 0; k < w.size(); ++k)
      for (std::size_t c = 0; c < out_cols; ++c) out.at(r, c) += w[k] * mid.at(rt.first[r] + k, c);
  }
  return out;
}

Tensor rasterize(const SpectrogramSample& sample, const RasterOptions& o) {
  if (o.out_size == 0 || o.channels == 0) throw ConfigError("raster size and channel count must be positive");
  if (!(o.stddev > 0.0)) throw ConfigError("raster stddev must be positive");
  const std::size_t n = o.out_size;
  Tensor plane = (sample.td.dim(0) == n && sample.td.dim(1) == n) ? sample.td : bilinear_resize(sample.td, n, n);
  for (double& v : plane.data())
    if (!std::isfinite(v)) v = 0.0;
  if (o.min_max) {
    const auto [lo, hi] = std::minmax_element(plane.data().begin(), plane.data().end());
    const double low = *lo, span = *hi - *lo;
    // a span at roundoff level is a resized constant, not signal
    const bool flat = span <= 1e-12 * std::max({std::abs(*lo), std::abs(*hi), 1.0});
    for (double& v : plane.data()) v = flat ? 0.0 : (v - low) / span;
  }
  Tensor out({o.channels, n, n});
  for (std::size_t ch = 0; ch < o.channels; ++ch)
    for (std::size_t i = 0; i < n * n; ++i) out[ch * n * n + i] = (plane[i] - o.mean) / o.stddev;
  return out;
}

void write_pgm(const std::string& path, const Tensor& map, bool flip_rows) {
  if (map.rank() != 2) throw DimensionError("write_pgm expects a matrix, got " + shape_string(map.shape()));
  const std::size_t rows = map.dim(0), cols = map.dim(1);
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double low = *lo, span = *hi - *lo;
  std::string bytes = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t src = flip_rows ? rows - 1 - r : r;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = span > 0.0 ? (map.at(src, c) - low) / span : 0.0;
      bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace selafd::radar
