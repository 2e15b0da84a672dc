#include "sptlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "sptlab/adam.hpp"
#include "sptlab/error.hpp"
#include "sptlab/ops.hpp"
#include "sptlab/rng.hpp"

namespace sptlab {
namespace {

constexpr int64_t kChunk = 250;

double sgn(double v) { return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0; }

double clamp01(double v) { return std::min(std::max(v, 0.0), 1.0); }

void check_inputs(const TensorPtr& images, const std::vector<int>& labels) {
  if (!images || images->shape.size() != 4)
    throw usage_error("attack: images must be [N,C,H,W]");
  if (int64_t(labels.size()) != images->shape[0])
    throw usage_error("attack: label count != image count");
  for (int lab : labels)
    if (lab < 0 || lab > 9) throw usage_error("attack: label out of range");
  for (double v : images->data)
    if (!(v >= 0.0 && v <= 1.0))
      throw domain_error("attack: pixel outside [0,1]");
}

void check_config(const PerturbationConfig& cfg) {
  if (cfg.epsilon < 0) throw usage_error("attack: epsilon must be >= 0");
  if (cfg.step < 0) throw usage_error("attack: step must be >= 0");
  if (cfg.step > cfg.epsilon)
    throw usage_error("attack: step must not exceed epsilon");
  if (cfg.iters < 1) throw usage_error("attack: iters must be >= 1");
}

// leaf copy of images[at .. at+n) ready to receive input gradient
TensorPtr chunk_leaf(const TensorPtr& images, int64_t at, int64_t n) {
  const int64_t px = images->size() / images->shape[0];
  auto x = Tensor::make({n, images->shape[1], images->shape[2],
                         images->shape[3]}, true);
  std::memcpy(x->data.data(), images->data.data() + at * px,
              size_t(n * px) * sizeof(double));
  return x;
}

// gradient of the mean cross-entropy w.r.t. x, written into x->grad
void input_grad(const Model& m, const TensorPtr& x, const TensorPtr& y) {
  x->ensure_grad();
  x->zero_grad();
  backward(ops::softmax_cross_entropy(logits(m, x), y));
}

}  // namespace

TensorPtr fgsm(const Model& m, const TensorPtr& images,
               const std::vector<int>& labels, double epsilon) {
  if (epsilon < 0) throw usage_error("fgsm: epsilon must be >= 0");
  check_inputs(images, labels);

  const int64_t N = images->shape[0];
  const int64_t px = images->size() / N;
  auto out = Tensor::make(images->shape);
  for (int64_t at = 0; at < N; at += kChunk) {
    const int64_t n = std::min(kChunk, N - at);
    auto x = chunk_leaf(images, at, n);
    std::vector<int> lab(labels.begin() + at, labels.begin() + at + n);
    input_grad(m, x, onehot(lab));
    for (int64_t j = 0; j < n * px; ++j)
      out->data[at * px + j] = clamp01(x->data[j] + epsilon * sgn(x->grad[j]));
  }
  return out;
}

TensorPtr pgd(const Model& m, const TensorPtr& images,
              const std::vector<int>& labels, const PerturbationConfig& cfg) {
  check_config(cfg);
  check_inputs(images, labels);

  const int64_t N = images->shape[0];
  const int64_t px = images->size() / N;

  // one stream for the whole call: chunking cannot shift anyone's noise
  std::vector<double> start(size_t(images->size()), 0.0);
  if (cfg.random_start) {
    Rng rng(cfg.seed);
    for (auto& v : start) v = rng.uniform(-cfg.epsilon, cfg.epsilon);
  }

  auto out = Tensor::make(images->shape);
  for (int64_t at = 0; at < N; at += kChunk) {
    const int64_t n = std::min(kChunk, N - at);
    const double* x0 = images->data.data() + at * px;
    auto x = chunk_leaf(images, at, n);
    for (int64_t j = 0; j < n * px; ++j)
      x->data[j] = clamp01(x->data[j] + start[size_t(at * px + j)]);
    std::vector<int> lab(labels.begin() + at, labels.begin() + at + n);
    auto y = onehot(lab);

    for (int it = 0; it < cfg.iters; ++it) {
      input_grad(m, x, y);
      for (int64_t j = 0; j < n * px; ++j) {
        double t = x->data[j] + cfg.step * sgn(x->grad[j]);
        t = std::min(std::max(t, x0[j] - cfg.epsilon), x0[j] + cfg.epsilon);
        x->data[j] = clamp01(t);
      }
    }
    std::memcpy(out->data.data() + at * px, x->data.data(),
                size_t(n * px) * sizeof(double));
  }
  return out;
}

void adversarial_train(Model& m, const Dataset& train, int epochs,
                       int64_t batch_size, uint64_t seed,
                       const PerturbationConfig& inner, double lr) {
  check_config(inner);
  if (train.size() == 0) throw usage_error("adversarial_train: empty dataset");
  if (epochs < 0) throw usage_error("adversarial_train: negative epochs");
  if (epochs == 0) return;

  auto params = m.params();
  std::vector<AdamState> opt;
  opt.reserve(params.size());
  for (const auto& p : params) opt.emplace_back(p->data.size(), lr);

  for (int e = 0; e < epochs; ++e) {
    Batches bs(train, batch_size,
               Rng::derive(seed, "epoch:" + std::to_string(e)));
    for (int64_t i = 0; i < bs.count(); ++i) {
      Batch b = bs.get(i);

      PerturbationConfig c = inner;
      c.seed = Rng::derive(seed, "adv:" + std::to_string(e) + ":" +
                                     std::to_string(i));
      m.set_requires_grad(false);  // crafting sees a frozen target
      TensorPtr adv = pgd(m, b.images, b.labels, c);

      m.set_requires_grad(true);
      for (const auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
      }
      backward(ops::softmax_cross_entropy(logits(m, adv), b.onehot));
      for (size_t j = 0; j < params.size(); ++j)
        opt[j].step(params[j]->data.data(), params[j]->grad.data(),
                    params[j]->data.size());
    }
  }
  m.set_requires_grad(false);
  m.epochs_trained += epochs;
  char tag[96];
  std::snprintf(tag, sizeof tag, "pgd_adv_train(eps=%g,step=%g,iters=%d)",
                inner.epsilon, inner.step, inner.iters);
  m.defense = tag;
}

}  // namespace sptlab
