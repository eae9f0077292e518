#pragma once

#include <cstddef>

namespace latentpath::detail {

// Accumulating matrix kernels in the three orientations the layers need.
// All matrices are dense row-major f64. Single-threaded on purpose: the
// training pipeline parallelizes across grid cells, and per-op results
// must be bit-deterministic.

// c[M,N] += a[M,K] * b[K,N]
inline void gemm_nn(const double* __restrict a, const double* __restrict b,
                    double* __restrict c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c[M,N] += a[M,K] * b[N,K]^T   (rows of b dotted against rows of a).
// Eight independent partial sums break the accumulator dependency chain so
// the reduction vectorizes; the summation order is fixed, keeping results
// bit-deterministic.
inline void gemm_nt(const double* __restrict a, const double* __restrict b,
                    double* __restrict c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      double s4 = 0.0, s5 = 0.0, s6 = 0.0, s7 = 0.0;
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8) {
        s0 += arow[p] * brow[p];
        s1 += arow[p + 1] * brow[p + 1];
        s2 += arow[p + 2] * brow[p + 2];
        s3 += arow[p + 3] * brow[p + 3];
        s4 += arow[p + 4] * brow[p + 4];
        s5 += arow[p + 5] * brow[p + 5];
        s6 += arow[p + 6] * brow[p + 6];
        s7 += arow[p + 7] * brow[p + 7];
      }
      for (; p < k; ++p) s0 += arow[p] * brow[p];
      crow[j] += ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
    }
  }
}

// c[M,N] += a[K,M]^T * b[K,N]
inline void gemm_tn(const double* __restrict a, const double* __restrict b,
                    double* __restrict c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* __restrict brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = arow[i];
      if (aip == 0.0) continue;
      double* __restrict crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace latentpath::detail
