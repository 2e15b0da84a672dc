#include <atomic>
#include <cstdlib>
#include <string>

#include "sptlab/kernels.hpp"

namespace sptlab::kern {

#if defined(__x86_64__) || defined(_M_X64)
const Kernels* avx2_kernels_impl();
const Kernels* avx512_kernels_impl();
#endif

const Kernels* avx2_kernels() {
#if defined(__x86_64__) || defined(_M_X64)
  static const Kernels* k =
      (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) ? avx2_kernels_impl()
                                                                        : nullptr;
  return k;
#else
  return nullptr;
#endif
}

const Kernels* avx512_kernels() {
#if defined(__x86_64__) || defined(_M_X64)
  static const Kernels* k =
      __builtin_cpu_supports("avx512f") ? avx512_kernels_impl() : nullptr;
  return k;
#else
  return nullptr;
#endif
}

std::vector<const Kernels*> available() {
  std::vector<const Kernels*> out;
  out.push_back(&scalar_kernels());
  if (const Kernels* k = avx2_kernels()) out.push_back(k);
  if (const Kernels* k = avx512_kernels()) out.push_back(k);
  return out;
}

namespace {

const Kernels* pick_default() {
  if (const char* env = std::getenv("SPTLAB_KERNEL")) {
    const std::string want(env);
    for (const Kernels* k : available()) {
      if (want == k->name) return k;
    }
    // Unknown or unsupported request falls through to the widest available.
  }
  if (const Kernels* k = avx512_kernels()) return k;
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& active_slot() {
  static std::atomic<const Kernels*> slot{pick_default()};
  return slot;
}

}  // namespace

const Kernels& active() { return *active_slot().load(std::memory_order_relaxed); }

bool set_active(const std::string& name) {
  for (const Kernels* k : available()) {
    if (name == k->name) {
      active_slot().store(k, std::memory_order_relaxed);
      return true;
    }
  }
  return false;
}

void relu_forward(const double* x, double* y, size_t n) { active().relu_fwd(x, y, n); }

void relu_backward(const double* x, const double* gy, double* gx, size_t n) {
  active().relu_bwd(x, gy, gx, n);
}

void adam_update(double* p, double* m, double* v, const double* g, size_t n, double beta1,
                 double beta2, double eps, double lr, double bc1, double bc2) {
  active().adam(p, m, v, g, n, beta1, beta2, eps, lr, bc1, bc2);
}

}  // namespace sptlab::kern
