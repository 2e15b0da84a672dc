#include "sptlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace sptlab {

uint64_t Rng::below(uint64_t n) {
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal(double mean, double sigma) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + sigma * spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return mean + sigma * (r * std::cos(th));
}

double Rng::truncated_normal(double sigma) {
  double z;
  do {
    z = normal();
  } while (std::abs(z) > 2.0);
  return sigma * z;
}

std::vector<int64_t> Rng::permutation(int64_t n) {
  std::vector<int64_t> p(n);
  for (int64_t i = 0; i < n; ++i) p[i] = i;
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(p[i], p[below(uint64_t(i) + 1)]);
  return p;
}

uint64_t Rng::derive(uint64_t seed, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](uint64_t byte) {
    h ^= byte;
    h *= 0x100000001b3ull;
  };
  for (int i = 0; i < 8; ++i) mix((seed >> (8 * i)) & 0xff);
  for (unsigned char c : tag) mix(c);
  return h;
}

}  // namespace sptlab
