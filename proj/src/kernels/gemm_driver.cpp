// Blocked GEMM driver shared by every kernel implementation.
//
// The driver owns the block boundaries (KC/MC/NC) and the packing, so the
// floating-point history of each output element is identical no matter which
// microkernel runs: ascending-k fma within a KC chunk, one add into C per
// chunk. Panels are zero-padded to whole tiles; padding lanes never change
// live values.

#include <algorithm>
#include <cstring>
#include <vector>

#include "sptlab/kernels.hpp"

namespace sptlab::kern {

namespace {

constexpr int64_t kKc = 192;
constexpr int64_t kMc = 192;
constexpr int64_t kNc = 4096;

inline double elem(const double* m, int64_t ld, bool trans, int64_t i, int64_t j) {
  return trans ? m[j * ld + i] : m[i * ld + j];
}

void pack_a(const double* a, int64_t lda, bool trans, int64_t i0, int64_t k0, int64_t mb,
            int64_t kb, int mr, double* out) {
  const int64_t tiles = (mb + mr - 1) / mr;
  for (int64_t t = 0; t < tiles; ++t) {
    for (int64_t k = 0; k < kb; ++k) {
      for (int r = 0; r < mr; ++r) {
        const int64_t i = t * mr + r;
        *out++ = i < mb ? elem(a, lda, trans, i0 + i, k0 + k) : 0.0;
      }
    }
  }
}

void pack_b(const double* b, int64_t ldb, bool trans, int64_t k0, int64_t j0, int64_t kb,
            int64_t nb, int nr, double* out) {
  const int64_t tiles = (nb + nr - 1) / nr;
  for (int64_t t = 0; t < tiles; ++t) {
    for (int64_t k = 0; k < kb; ++k) {
      if (!trans) {
        const double* src = b + (k0 + k) * ldb + j0 + t * nr;
        const int64_t live = std::min<int64_t>(nr, nb - t * nr);
        for (int64_t c = 0; c < live; ++c) *out++ = src[c];
        for (int64_t c = live; c < nr; ++c) *out++ = 0.0;
      } else {
        for (int c = 0; c < nr; ++c) {
          const int64_t j = t * nr + c;
          *out++ = j < nb ? b[(j0 + j) * ldb + (k0 + k)] : 0.0;
        }
      }
    }
  }
}

}  // namespace

void gemm_with(const Kernels& impl, bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
               const double* a, int64_t lda, const double* b, int64_t ldb, double* c, int64_t ldc,
               bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int64_t i = 0; i < m; ++i) std::memset(c + i * ldc, 0, sizeof(double) * n);
    }
    return;
  }

  const int mr = impl.mr;
  const int nr = impl.nr;
  thread_local std::vector<double> apack;
  thread_local std::vector<double> bpack;
  apack.resize(static_cast<size_t>(((kMc + mr - 1) / mr) * mr) * kKc);
  bpack.resize(static_cast<size_t>(((kNc + nr - 1) / nr) * nr) * kKc);

  for (int64_t jc = 0; jc < n; jc += kNc) {
    const int64_t nb = std::min(kNc, n - jc);
    const int64_t jt = (nb + nr - 1) / nr;
    for (int64_t k0 = 0; k0 < k; k0 += kKc) {
      const int64_t kb = std::min(kKc, k - k0);
      const bool first = k0 == 0 && !accumulate;
      pack_b(b, ldb, trans_b, k0, jc, kb, nb, nr, bpack.data());
      for (int64_t ic = 0; ic < m; ic += kMc) {
        const int64_t mb = std::min(kMc, m - ic);
        const int64_t it = (mb + mr - 1) / mr;
        pack_a(a, lda, trans_a, ic, k0, mb, kb, mr, apack.data());
        for (int64_t jr = 0; jr < jt; ++jr) {
          const int n_live = static_cast<int>(std::min<int64_t>(nr, nb - jr * nr));
          const double* bp = bpack.data() + jr * kb * nr;
          for (int64_t ir = 0; ir < it; ++ir) {
            const int m_live = static_cast<int>(std::min<int64_t>(mr, mb - ir * mr));
            const double* ap = apack.data() + ir * kb * mr;
            double* cp = c + (ic + ir * mr) * ldc + jc + jr * nr;
            if (m_live == mr && n_live == nr) {
              impl.tile(static_cast<int>(kb), ap, bp, cp, ldc, first);
            } else {
              impl.tile_edge(static_cast<int>(kb), ap, bp, cp, ldc, m_live, n_live, first);
            }
          }
        }
      }
    }
  }
}

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const double* a,
          int64_t lda, const double* b, int64_t ldb, double* c, int64_t ldc, bool accumulate) {
  gemm_with(active(), trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

}  // namespace sptlab::kern
