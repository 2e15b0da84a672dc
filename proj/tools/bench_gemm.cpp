// Measures sustained double-precision GEMM throughput for each available
// kernel implementation, plus a quick cross-implementation agreement check.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "sptlab/kernels.hpp"

using sptlab::kern::Kernels;

static double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

int main(int argc, char** argv) {
  int64_t m = 1024, n = 1024, k = 1024;
  double seconds = 2.0;
  if (argc > 1) m = n = k = std::strtoll(argv[1], nullptr, 10);
  if (argc > 2) seconds = std::strtod(argv[2], nullptr);

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> a(m * k), b(k * n), c(m * n), ref;
  for (auto& x : a) x = dist(rng);
  for (auto& x : b) x = dist(rng);

  const double flop = 2.0 * double(m) * double(n) * double(k);
  for (const Kernels* impl : sptlab::kern::available()) {
    // warmup + correctness snapshot
    sptlab::kern::gemm_with(*impl, false, false, m, n, k, a.data(), k, b.data(), n,
                      c.data(), n, false);
    if (ref.empty()) {
      ref = c;
    } else {
      size_t bad = 0;
      for (size_t i = 0; i < ref.size(); ++i)
        if (std::memcmp(&ref[i], &c[i], sizeof(double)) != 0) ++bad;
      if (bad) {
        std::printf("%s: %zu elements differ from reference BITWISE\n",
                    impl->name, bad);
        return 1;
      }
    }
    int iters = 0;
    double t0 = now_s(), t1 = t0;
    while (t1 - t0 < seconds) {
      sptlab::kern::gemm_with(*impl, false, false, m, n, k, a.data(), k, b.data(), n,
                        c.data(), n, false);
      ++iters;
      t1 = now_s();
    }
    std::printf("%-8s %5lldx%-5lld  %6.2f GFLOPS  (%d iters, %.2fs)\n",
                impl->name, (long long)m, (long long)n,
                flop * iters / (t1 - t0) / 1e9, iters, t1 - t0);
  }
  return 0;
}
