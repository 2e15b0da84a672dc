#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sptlab {

// Adam with bias correction. One state per parameter vector; step() applies
// the canonical update (beta1 0.9, beta2 0.999, eps 1e-8) at the stored
// learning rate and advances t.
struct AdamState {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<double> m, v;

  AdamState(size_t n, double learning_rate)
      : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}

  void step(double* params, const double* grads, size_t n);
};

}  // namespace sptlab
