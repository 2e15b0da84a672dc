#pragma once

#include <cstdint>
#include <vector>

#include "sptlab/data.hpp"
#include "sptlab/models.hpp"
#include "sptlab/tensor.hpp"

namespace sptlab {

// L-inf perturbation budget and iteration schedule, shared by the PGD
// attack and PGD adversarial training.
struct PerturbationConfig {
  double epsilon = 0.3;
  double step = 0.01;
  int iters = 40;
  bool random_start = true;
  uint64_t seed = 0;
};

// x' = clip(x + epsilon * sign(d CE / d x), 0, 1), with sign(0) = 0.
// Internally chunked; model parameters are read, never written.
TensorPtr fgsm(const Model& m, const TensorPtr& images,
               const std::vector<int>& labels, double epsilon);

// Iterated sign ascent from a random point of the epsilon-ball (or from x
// itself when random_start is off), each step projected back onto
// B_inf(x, epsilon) intersected with [0,1]. Deterministic given cfg.seed;
// the start noise is drawn once per call, so results do not depend on the
// internal chunk size. With {iters: 1, random_start: false, step: epsilon}
// this reproduces fgsm bit for bit.
TensorPtr pgd(const Model& m, const TensorPtr& images,
              const std::vector<int>& labels, const PerturbationConfig& cfg);

// Supervised training on adversarial batches only: every batch is replaced
// by PGD examples crafted against the current parameters under `inner`
// before the update step. Matches train_classifier's shuffle and update
// sequence exactly (with inner.epsilon = 0 the two are bit-identical).
// Tags m.defense with the inner configuration.
void adversarial_train(Model& m, const Dataset& train, int epochs,
                       int64_t batch_size, uint64_t seed,
                       const PerturbationConfig& inner, double lr = 1e-3);

}  // namespace sptlab
