#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sptlab::kern {

// One instruction-set implementation of the hot inner loops: the GEMM
// microkernel tile plus the elementwise kernels that matter for training
// throughput.
//
// Every implementation of a kernel is bit-identical to the scalar reference:
// per output element the accumulation order is the same (ascending k, fused
// multiply-add), elementwise ops use only correctly-rounded IEEE operations,
// and the shared GEMM driver fixes the block boundaries. Switching the
// instruction set therefore never changes the result of a run, only its
// speed. The equivalence tests assert exact equality, not a tolerance.
struct Kernels {
  const char* name;

  // GEMM microkernel geometry: the tile kernels compute an mr x nr block.
  int mr;
  int nr;

  // c[mr x nr] (row stride ldc) (+)= a_panel * b_panel over kc steps.
  // a: packed kc*mr (mr values per k step), b: packed kc*nr.
  // first == true overwrites c, otherwise accumulates into it.
  void (*tile)(int kc, const double* a, const double* b, double* c, int64_t ldc, bool first);

  // Same as tile but stores only the live m x n corner (m <= mr, n <= nr).
  // Packed panels are zero-padded to full tiles, so the dead lanes never
  // disturb live ones.
  void (*tile_edge)(int kc, const double* a, const double* b, double* c, int64_t ldc, int m,
                    int n, bool first);

  // y[i] = max(0, x[i])
  void (*relu_fwd)(const double* x, double* y, size_t n);

  // gx[i] += (x[i] > 0) ? gy[i] : 0
  void (*relu_bwd)(const double* x, const double* gy, double* gx, size_t n);

  // Adam update with bias correction. c1 = 1-beta1, c2 = 1-beta2,
  // bc1 = 1-beta1^t, bc2 = 1-beta2^t. Operation order is pinned:
  //   m = fma(beta1, m, c1*g)
  //   v = fma(beta2, v, c2*(g*g))
  //   p -= (lr * (m/bc1)) / (sqrt(v/bc2) + eps)
  void (*adam)(double* p, double* m, double* v, const double* g, size_t n, double beta1,
               double beta2, double eps, double lr, double bc1, double bc2);
};

const Kernels& scalar_kernels();
const Kernels* avx2_kernels();    // nullptr when the CPU lacks AVX2+FMA
const Kernels* avx512_kernels();  // nullptr when the CPU lacks AVX-512F

// Implementations usable on this machine, scalar first.
std::vector<const Kernels*> available();

// Active implementation: the widest available one, unless overridden by
// set_active() or the SPTLAB_KERNEL environment variable (scalar|avx2|avx512).
const Kernels& active();
bool set_active(const std::string& name);

// C[m,n] (+)= op(A) * op(B) with op = transpose when the flag is set.
// Row-major; lda/ldb/ldc are row strides of the stored matrices.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const double* a,
          int64_t lda, const double* b, int64_t ldb, double* c, int64_t ldc, bool accumulate);

// Same, with an explicit implementation (used by the equivalence tests).
void gemm_with(const Kernels& impl, bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
               const double* a, int64_t lda, const double* b, int64_t ldb, double* c, int64_t ldc,
               bool accumulate);

void relu_forward(const double* x, double* y, size_t n);
void relu_backward(const double* x, const double* gy, double* gx, size_t n);
void adam_update(double* p, double* m, double* v, const double* g, size_t n, double beta1,
                 double beta2, double eps, double lr, double bc1, double bc2);

}  // namespace sptlab::kern
