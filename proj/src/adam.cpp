#include "sptlab/adam.hpp"

#include <cmath>

#include "sptlab/error.hpp"
#include "sptlab/kernels.hpp"

namespace sptlab {

void AdamState::step(double* params, const double* grads, size_t n) {
  if (n != m.size())
    throw usage_error("adam: parameter length does not match state");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  kern::adam_update(params, m.data(), v.data(), grads, n, beta1, beta2, eps,
                    lr, bc1, bc2);
}

}  // namespace sptlab
