#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sptlab/data.hpp"
#include "sptlab/tensor.hpp"

namespace sptlab {

// The five classifier architectures. C_a0 is C_p's architecture under a
// different initialization; the rest differ structurally.
enum class Arch { Cp, Ca0, Ca1, Ca2, Ca3 };

const char* arch_name(Arch a);
std::optional<Arch> arch_from(std::string_view name);
inline const Arch kAllArchs[] = {Arch::Cp, Arch::Ca0, Arch::Ca1, Arch::Ca2,
                                 Arch::Ca3};

struct Layer {
  enum Kind { conv, pool, fc, relu } kind;
  std::string name;   // parameter block prefix for conv/fc
  TensorPtr w, b;     // conv: w [F,C,k,k]; fc: w [D,M]
  int window = 0;     // pool
  int stride = 0;     // conv/pool
};

// Architecture plus parameters plus training metadata. Parameters are built
// with requires_grad = false; training functions toggle it internally, so a
// model used as an attack target is frozen by construction.
struct Model {
  Arch arch = Arch::Cp;
  std::vector<Layer> layers;
  uint64_t seed = 0;
  int epochs_trained = 0;
  double test_accuracy = -1.0;  // -1 = not measured
  std::string defense;          // empty, or e.g. "pgd_adv_train(eps=0.3,...)"

  std::vector<std::pair<std::string, TensorPtr>> named_params() const;
  std::vector<TensorPtr> params() const;
  int64_t param_count() const;
  void set_requires_grad(bool rg) const;
};

// Freshly initialized model: truncated-normal (sigma 0.1) weights, constant
// 0.1 biases, parameter streams derived from (seed, arch, layer name) so
// C_p and C_a0 differ by construction even under one experiment seed.
Model build(Arch arch, uint64_t seed);

// Class logits, recorded on the tape when any involved tensor requires grad.
TensorPtr logits(const Model& m, const TensorPtr& images);

// Softmax probabilities [N,10]; pure, never recorded, internally chunked so
// large N stays within memory.
TensorPtr predict(const Model& m, const TensorPtr& images);

std::vector<int> predict_labels(const Model& m, const TensorPtr& images);

// Supervised training: Adam (lr default 1e-3), per-epoch seeded shuffle,
// deterministic given seed. epochs == 0 is a no-op.
void train_classifier(Model& m, const Dataset& train, int epochs,
                      int64_t batch_size, uint64_t seed, double lr = 1e-3);

void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace sptlab
