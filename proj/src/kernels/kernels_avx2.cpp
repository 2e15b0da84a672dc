// AVX2+FMA kernels. Compiled with -mavx2 -mfma; only dispatched to when the
// CPU reports both (see dispatch.cpp).

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

#include "sptlab/kernels.hpp"

namespace sptlab::kern {

namespace {

constexpr int kMr = 6;
constexpr int kNr = 8;  // two 4-wide vectors

// 6x8 tile: 12 accumulator registers, k ascending, one fma per element step.
void tile_full(int kc, const double* a, const double* b, double* c, int64_t ldc, bool first) {
  __m256d acc[kMr][2];
  for (int r = 0; r < kMr; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (int k = 0; k < kc; ++k) {
    const __m256d b0 = _mm256_loadu_pd(b + k * kNr);
    const __m256d b1 = _mm256_loadu_pd(b + k * kNr + 4);
    const double* ak = a + k * kMr;
    for (int r = 0; r < kMr; ++r) {
      const __m256d ar = _mm256_set1_pd(ak[r]);
      acc[r][0] = _mm256_fmadd_pd(ar, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(ar, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < kMr; ++r) {
    double* crow = c + r * ldc;
    if (first) {
      _mm256_storeu_pd(crow, acc[r][0]);
      _mm256_storeu_pd(crow + 4, acc[r][1]);
    } else {
      _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc[r][0]));
      _mm256_storeu_pd(crow + 4, _mm256_add_pd(_mm256_loadu_pd(crow + 4), acc[r][1]));
    }
  }
}

// Full-size compute on the zero-padded panels, partial store of the m x n
// live corner.
void tile_edge(int kc, const double* a, const double* b, double* c, int64_t ldc, int m, int n,
               bool first) {
  __m256d acc[kMr][2];
  for (int r = 0; r < kMr; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (int k = 0; k < kc; ++k) {
    const __m256d b0 = _mm256_loadu_pd(b + k * kNr);
    const __m256d b1 = _mm256_loadu_pd(b + k * kNr + 4);
    const double* ak = a + k * kMr;
    for (int r = 0; r < kMr; ++r) {
      const __m256d ar = _mm256_set1_pd(ak[r]);
      acc[r][0] = _mm256_fmadd_pd(ar, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(ar, b1, acc[r][1]);
    }
  }
  alignas(32) double buf[kNr];
  for (int r = 0; r < m; ++r) {
    _mm256_store_pd(buf, acc[r][0]);
    _mm256_store_pd(buf + 4, acc[r][1]);
    double* crow = c + r * ldc;
    for (int col = 0; col < n; ++col) {
      crow[col] = first ? buf[col] : crow[col] + buf[col];
    }
  }
}

void relu_fwd(const double* x, double* y, size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* gy, double* gx, size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d pass = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), pass));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void adam(double* p, double* m, double* v, const double* g, size_t n, double beta1, double beta2,
          double eps, double lr, double bc1, double bc2) {
  const double c1 = 1.0 - beta1;
  const double c2 = 1.0 - beta2;
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vc1 = _mm256_set1_pd(c1);
  const __m256d vc2 = _mm256_set1_pd(c2);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vbc1 = _mm256_set1_pd(bc1);
  const __m256d vbc2 = _mm256_set1_pd(bc2);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    __m256d mi = _mm256_loadu_pd(m + i);
    __m256d vi = _mm256_loadu_pd(v + i);
    mi = _mm256_fmadd_pd(vb1, mi, _mm256_mul_pd(vc1, gi));
    vi = _mm256_fmadd_pd(vb2, vi, _mm256_mul_pd(vc2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_div_pd(mi, vbc1);
    const __m256d vhat = _mm256_div_pd(vi, vbc2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(vlr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = __builtin_fma(beta1, m[i], c1 * g[i]);
    v[i] = __builtin_fma(beta2, v[i], c2 * (g[i] * g[i]));
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= (lr * mhat) / (__builtin_sqrt(vhat) + eps);
  }
}

}  // namespace

const Kernels* avx2_kernels_impl() {
  static const Kernels k = {"avx2", kMr, kNr, tile_full, tile_edge, relu_fwd, relu_bwd, adam};
  return &k;
}

}  // namespace sptlab::kern

#endif  // x86_64
