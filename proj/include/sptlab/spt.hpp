#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sptlab/data.hpp"
#include "sptlab/models.hpp"
#include "sptlab/tensor.hpp"

namespace sptlab {

// Pixelwise transformation family g(x) = sigmoid(sum_i w_i * x^gamma_i).
// The exponent ladder is fixed; only the weights are learned, so a trained
// transformation is 11 scalars no matter the image or model size.
struct SptParams {
  std::vector<double> gammas{0.04, 0.10, 0.20, 0.40, 0.67, 1.0,
                             1.5,  2.5,  5.0,  10.0, 25.0};
  std::vector<double> weights;  // same length as gammas
  double alpha = 0.0;           // L2 penalty coefficient on the weights
  uint64_t init_seed = 0;
  std::string init_scheme = "normal0.5";

  // w_i = 0.5 * N(0,1), drawn from a stream derived from seed. A non-empty
  // `gammas` replaces the default exponent ladder (weights sized to match).
  static SptParams init(double alpha, uint64_t seed,
                        std::vector<double> gammas = {});
};

struct SptTrainConfig {
  double lr = 1e-4;
  int epochs = 1;
  int64_t batch = 64;
  int targeted_label = -1;  // -1: untargeted (push predictions off the truth)
  uint64_t shuffle_seed = 0;
};

struct SptTrace {
  std::vector<double> epoch_mean;  // mean per-batch objective, one per epoch
  double initial_objective = 0.0;  // over the whole dataset, before training
  double final_objective = 0.0;    // ... and after
};

// Mean objective of the weights against a model over a dataset. Untargeted:
// -CE(f(g(x)), y_true) + alpha*|w|^2, so minimizing drives probability mass
// off the true labels; targeted (label >= 0): +CE against that label. The
// cross-entropy term is mean-reduced over examples (a sum differs only by a
// constant factor folded into the learning rate).
double spt_objective(const SptParams& p, const Model& target,
                     const Dataset& data, int targeted_label = -1);

// Adam fit of the weights against a frozen target model (one epoch, batch 64
// by default). Only the weight vector receives gradient; model parameters
// are never touched. Deterministic given the weights and shuffle_seed.
SptTrace train_spt(SptParams& p, const Model& target, const Dataset& train,
                   const SptTrainConfig& cfg = {});

// Applies g pixelwise. Pure, no tape, bit-identical to the training-time
// composition (same pow and accumulation order). Pixels on the k/255 grid
// go through a 256-entry table; off-grid values are computed directly.
TensorPtr transform(const SptParams& p, const TensorPtr& images);

inline TensorPtr generate(const SptParams& p, const TensorPtr& images) {
  return transform(p, images);
}

// Versioned text file: scheme, seed, alpha, exponents, weights. Values are
// written at %.17g so doubles round-trip exactly.
void save_spt(const SptParams& p, const std::string& path);
SptParams load_spt(const std::string& path);

// Canonical location of a fitted transformation:
// <dir>/<dataset>-<arch>[-adv]-seed<seed>-alpha<a>.spt
std::string spt_param_path(const std::string& dir, const std::string& dataset,
                           const std::string& target_arch, bool defended,
                           uint64_t init_seed, double alpha);

// Load the parameter file at `path` if it exists (validating that it matches
// the requested alpha and seed); otherwise initialize, fit against `target`
// on `train`, and save it there. Directories are created as needed.
SptParams fit_or_load_spt(const std::string& path, double alpha,
                          uint64_t init_seed, const Model& target,
                          const Dataset& train, const SptTrainConfig& cfg,
                          std::vector<double> gammas = {});

}  // namespace sptlab
