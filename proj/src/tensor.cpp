#include "sptlab/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "sptlab/error.hpp"

namespace sptlab {

int64_t shape_size(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw dimension_error("non-positive dimension in shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> s, bool rg)
    : shape(std::move(s)), data(shape_size(shape), 0.0), requires_grad(rg) {}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0);
}

TensorPtr Tensor::make(std::vector<int64_t> shape, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

TensorPtr Tensor::from(std::vector<int64_t> shape, std::vector<double> values,
                       bool requires_grad) {
  auto t = make(std::move(shape), requires_grad);
  if (int64_t(values.size()) != t->size())
    throw dimension_error("value count does not match shape");
  t->data = std::move(values);
  return t;
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

void backward(const TensorPtr& root) {
  if (!root) throw usage_error("backward: null root");
  if (root->size() != 1) throw usage_error("backward: root must be a scalar");

  // Post-order DFS over parent links; `order` ends up topologically sorted
  // (parents before children), so the reverse walk visits each op once with
  // its output gradient complete.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<Tensor*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (next < t->parents.size()) {
      Tensor* p = t->parents[next++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }

  for (Tensor* t : order) {
    if (!t->leaf()) {
      t->ensure_grad();
      t->zero_grad();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* t = *it;
    if (t->backprop && t->requires_grad) t->backprop();
  }
}

}  // namespace sptlab
