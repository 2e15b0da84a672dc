#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sptlab {

// Deterministic random source. All draw algorithms are spelled out here
// (never delegated to std::*_distribution, whose algorithms are
// implementation-defined) so that a seed pins the stream bit-for-bit.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 random bits
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n), rejection-sampled to avoid modulo bias
  uint64_t below(uint64_t n);

  // Box-Muller; the second value of each pair is cached
  double normal(double mean = 0.0, double sigma = 1.0);

  // standard normal resampled until |z| <= 2, then scaled
  double truncated_normal(double sigma);

  std::vector<int64_t> permutation(int64_t n);

  // stable sub-seed for a named stream (FNV-1a over tag, mixed with seed)
  static uint64_t derive(uint64_t seed, std::string_view tag);

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sptlab
