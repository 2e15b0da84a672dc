// AVX-512F kernels. Compiled with -mavx512f; only dispatched to when the CPU
// reports the feature (see dispatch.cpp).

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "sptlab/kernels.hpp"

namespace sptlab::kern {

namespace {

constexpr int kMr = 8;
constexpr int kNr = 16;  // two 8-wide vectors

void tile_full(int kc, const double* a, const double* b, double* c, int64_t ldc, bool first) {
  __m512d acc[kMr][2];
  for (int r = 0; r < kMr; ++r) {
    acc[r][0] = _mm512_setzero_pd();
    acc[r][1] = _mm512_setzero_pd();
  }
  for (int k = 0; k < kc; ++k) {
    const __m512d b0 = _mm512_loadu_pd(b + k * kNr);
    const __m512d b1 = _mm512_loadu_pd(b + k * kNr + 8);
    const double* ak = a + k * kMr;
    for (int r = 0; r < kMr; ++r) {
      const __m512d ar = _mm512_set1_pd(ak[r]);
      acc[r][0] = _mm512_fmadd_pd(ar, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(ar, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < kMr; ++r) {
    double* crow = c + r * ldc;
    if (first) {
      _mm512_storeu_pd(crow, acc[r][0]);
      _mm512_storeu_pd(crow + 8, acc[r][1]);
    } else {
      _mm512_storeu_pd(crow, _mm512_add_pd(_mm512_loadu_pd(crow), acc[r][0]));
      _mm512_storeu_pd(crow + 8, _mm512_add_pd(_mm512_loadu_pd(crow + 8), acc[r][1]));
    }
  }
}

void tile_edge(int kc, const double* a, const double* b, double* c, int64_t ldc, int m, int n,
               bool first) {
  __m512d acc[kMr][2];
  for (int r = 0; r < kMr; ++r) {
    acc[r][0] = _mm512_setzero_pd();
    acc[r][1] = _mm512_setzero_pd();
  }
  for (int k = 0; k < kc; ++k) {
    const __m512d b0 = _mm512_loadu_pd(b + k * kNr);
    const __m512d b1 = _mm512_loadu_pd(b + k * kNr + 8);
    const double* ak = a + k * kMr;
    for (int r = 0; r < kMr; ++r) {
      const __m512d ar = _mm512_set1_pd(ak[r]);
      acc[r][0] = _mm512_fmadd_pd(ar, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(ar, b1, acc[r][1]);
    }
  }
  const __mmask8 m0 = n >= 8 ? 0xFF : static_cast<__mmask8>((1u << n) - 1u);
  const __mmask8 m1 = n >= 8 ? static_cast<__mmask8>((1u << (n - 8)) - 1u) : 0;
  for (int r = 0; r < m; ++r) {
    double* crow = c + r * ldc;
    if (first) {
      _mm512_mask_storeu_pd(crow, m0, acc[r][0]);
      if (m1) _mm512_mask_storeu_pd(crow + 8, m1, acc[r][1]);
    } else {
      const __m512d c0 = _mm512_maskz_loadu_pd(m0, crow);
      _mm512_mask_storeu_pd(crow, m0, _mm512_add_pd(c0, acc[r][0]));
      if (m1) {
        const __m512d c1 = _mm512_maskz_loadu_pd(m1, crow + 8);
        _mm512_mask_storeu_pd(crow + 8, m1, _mm512_add_pd(c1, acc[r][1]));
      }
    }
  }
}

void relu_fwd(const double* x, double* y, size_t n) {
  const __m512d zero = _mm512_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm512_storeu_pd(y + i, _mm512_max_pd(_mm512_loadu_pd(x + i), zero));
  }
  if (i < n) {
    const __mmask8 mask = static_cast<__mmask8>((1u << (n - i)) - 1u);
    const __m512d xi = _mm512_maskz_loadu_pd(mask, x + i);
    _mm512_mask_storeu_pd(y + i, mask, _mm512_max_pd(xi, zero));
  }
}

void relu_bwd(const double* x, const double* gy, double* gx, size_t n) {
  const __m512d zero = _mm512_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __mmask8 pos = _mm512_cmp_pd_mask(_mm512_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m512d pass = _mm512_maskz_loadu_pd(pos, gy + i);
    _mm512_storeu_pd(gx + i, _mm512_add_pd(_mm512_loadu_pd(gx + i), pass));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void adam(double* p, double* m, double* v, const double* g, size_t n, double beta1, double beta2,
          double eps, double lr, double bc1, double bc2) {
  const double c1 = 1.0 - beta1;
  const double c2 = 1.0 - beta2;
  const __m512d vb1 = _mm512_set1_pd(beta1);
  const __m512d vb2 = _mm512_set1_pd(beta2);
  const __m512d vc1 = _mm512_set1_pd(c1);
  const __m512d vc2 = _mm512_set1_pd(c2);
  const __m512d veps = _mm512_set1_pd(eps);
  const __m512d vlr = _mm512_set1_pd(lr);
  const __m512d vbc1 = _mm512_set1_pd(bc1);
  const __m512d vbc2 = _mm512_set1_pd(bc2);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d gi = _mm512_loadu_pd(g + i);
    __m512d mi = _mm512_loadu_pd(m + i);
    __m512d vi = _mm512_loadu_pd(v + i);
    mi = _mm512_fmadd_pd(vb1, mi, _mm512_mul_pd(vc1, gi));
    vi = _mm512_fmadd_pd(vb2, vi, _mm512_mul_pd(vc2, _mm512_mul_pd(gi, gi)));
    _mm512_storeu_pd(m + i, mi);
    _mm512_storeu_pd(v + i, vi);
    const __m512d mhat = _mm512_div_pd(mi, vbc1);
    const __m512d vhat = _mm512_div_pd(vi, vbc2);
    const __m512d step =
        _mm512_div_pd(_mm512_mul_pd(vlr, mhat), _mm512_add_pd(_mm512_sqrt_pd(vhat), veps));
    _mm512_storeu_pd(p + i, _mm512_sub_pd(_mm512_loadu_pd(p + i), step));
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

const Kernels* avx512_kernels_impl() {
  static const Kernels k = {"avx512", kMr, kNr, tile_full, tile_edge, relu_fwd, relu_bwd, adam};
  return &k;
}

}  // namespace sptlab::kern

#endif  // x86_64
