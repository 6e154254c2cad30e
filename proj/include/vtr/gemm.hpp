#pragma once

#include <cstdint>

// Row-major accumulation kernels shared by the autodiff ops and the ranking
// stage. All write with += so callers zero the destination first.
namespace vtr::core::gemm {

using i64 = std::int64_t;

// c(m x n) += a(m x k) . b(k x n)
inline void nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (i64 p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = b + p * n;
      for (i64 j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

inline double dot(const double* a, const double* b, i64 n);

// c(m x n) += a(m x k) . b(n x k)^T
inline void nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (i64 j = 0; j < n; ++j) cr[j] += dot(ar, b + j * k, k);
  }
}

// c(m x n) += a(k x m)^T . b(k x n)
inline void tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
  for (i64 p = 0; p < k; ++p) {
    const double* ar = a + p * m;
    const double* br = b + p * n;
    for (i64 i = 0; i < m; ++i) {
      const double av = ar[i];
      double* cr = c + i * n;
      for (i64 j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// Four independent accumulators in a fixed order: deterministic and wide
// enough for the vectorizer to keep fused multiply-adds busy.
inline double dot(const double* a, const double* b, i64 n) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  double acc = (acc0 + acc1) + (acc2 + acc3);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace vtr::core::gemm
