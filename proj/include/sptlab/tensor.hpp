#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace sptlab {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major 64-bit tensor, optionally participating in the gradient
// tape. The tape is implicit: each op output records its parent tensors and
// a closure that pushes the output's gradient into them, so the graph of
// `parents` links IS the tape, already in topological order of construction.
class Tensor {
 public:
  std::vector<int64_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first use; same length as data
  bool requires_grad = false;

  std::vector<TensorPtr> parents;
  std::function<void()> backprop;  // set on op outputs only

  Tensor() = default;
  Tensor(std::vector<int64_t> s, bool rg);

  int64_t size() const { return int64_t(data.size()); }
  bool leaf() const { return !backprop; }
  void ensure_grad();
  void zero_grad();

  static TensorPtr make(std::vector<int64_t> shape, bool requires_grad = false);
  static TensorPtr from(std::vector<int64_t> shape, std::vector<double> values,
                        bool requires_grad = false);
  static TensorPtr scalar(double v, bool requires_grad = false);
};

int64_t shape_size(const std::vector<int64_t>& shape);

// Reverse-mode accumulation from a scalar root. Gradients of op outputs
// (non-leaves) are owned by the engine and reset on every call; gradients of
// leaves ACCUMULATE across calls — callers zero them between optimizer steps.
void backward(const TensorPtr& root);

}  // namespace sptlab
