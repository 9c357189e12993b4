// SPDX-License-Identifier: Apache-2.0
#pragma once

// Row-major dense kernels on top of CBLAS. All accumulate into `c`
// (c += ...).

#include <cblas.h>

#include <cstddef>

namespace selafd::kernels {

inline int to_int(std::size_t v) { return static_cast<int>(v); }

/// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, to_int(m), to_int(n), to_int(k), 1.0, a, to_int(k), b,
              to_int(n), 1.0, c, to_int(n));
}

/// c[k x n] += a[m x k]^T * b[m x n]
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, to_int(k), to_int(n), to_int(m), 1.0, a, to_int(k), b,
              to_int(n), 1.0, c, to_int(n));
}

/// c[m x n] += a[m x k] * b[n x k]^T
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, to_int(m), to_int(n), to_int(k), 1.0, a, to_int(k), b,
              to_int(k), 1.0, c, to_int(n));
}

inline void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace selafd::kernels
