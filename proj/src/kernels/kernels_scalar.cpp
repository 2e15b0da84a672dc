#include <cmath>

#include "sptlab/kernels.hpp"

namespace sptlab::kern {

namespace {

constexpr int kMr = 4;
constexpr int kNr = 4;

// Generic tile: accumulators in locals, ascending k, std::fma per step.
// This is the reference order every SIMD variant reproduces.
void tile_generic(int kc, const double* a, const double* b, double* c, int64_t ldc, int m, int n,
                  bool first) {
  double acc[kMr][kNr] = {};
  for (int k = 0; k < kc; ++k) {
    const double* ak = a + static_cast<int64_t>(k) * kMr;
    const double* bk = b + static_cast<int64_t>(k) * kNr;
    for (int r = 0; r < kMr; ++r) {
      for (int col = 0; col < kNr; ++col) {
        acc[r][col] = std::fma(ak[r], bk[col], acc[r][col]);
      }
    }
  }
  for (int r = 0; r < m; ++r) {
    double* crow = c + static_cast<int64_t>(r) * ldc;
    for (int col = 0; col < n; ++col) {
      crow[col] = first ? acc[r][col] : crow[col] + acc[r][col];
    }
  }
}

void tile_full(int kc, const double* a, const double* b, double* c, int64_t ldc, bool first) {
  tile_generic(kc, a, b, c, ldc, kMr, kNr, first);
}

void relu_fwd(const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* gy, double* gx, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void adam(double* p, double* m, double* v, const double* g, size_t n, double beta1, double beta2,
          double eps, double lr, double bc1, double bc2) {
  const double c1 = 1.0 - beta1;
  const double c2 = 1.0 - beta2;
  for (size_t i = 0; i < n; ++i) {
    m[i] = std::fma(beta1, m[i], c1 * g[i]);
    v[i] = std::fma(beta2, v[i], c2 * (g[i] * g[i]));
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= (lr * mhat) / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k = {"scalar", kMr, kNr, tile_full, tile_generic,
                            relu_fwd, relu_bwd, adam};
  return k;
}

}  // namespace sptlab::kern
