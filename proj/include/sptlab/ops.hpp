#pragma once

#include <vector>

#include "sptlab/tensor.hpp"

namespace sptlab::ops {

enum class Padding { same, valid };

// Cross-correlation, x [N,C,H,W] * w [F,C,k,k] + b [F] -> [N,F,H',W'].
// padding same pads with zeros so H' = ceil(H/stride) (TF convention:
// floor((k-1)/2) before, the rest after).
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride, Padding pad);

// Window/stride pooling; a partial rightmost/bottom window is padded with
// -inf (so output spatial size is ceil(H/stride)). Gradient goes to the
// first occurrence of each window maximum.
TensorPtr maxpool2d(const TensorPtr& x, int window, int stride);

// x [N,D] * w [D,M] + b [M] -> [N,M]
TensorPtr affine(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

TensorPtr relu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);

// Elementwise x^g over x in [0,1], g >= 0, with 0^0 = 1 and 0^g = 0 for
// g > 0. For g < 1 the derivative at 0 diverges; the backward pass clamps
// its input to max(x, 1e-6) so gradients stay finite.
TensorPtr power(const TensorPtr& x, double g);

// sum_i w[i] * basis[i], all basis tensors of one shape, w of length
// len(basis). Gradient w.r.t. w[i] is <dout, basis[i]>.
TensorPtr weighted_sum(const std::vector<TensorPtr>& basis, const TensorPtr& w);

TensorPtr reshape(const TensorPtr& x, std::vector<int64_t> shape);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);  // same shape
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr sum_squares(const TensorPtr& a);  // -> scalar

// Mean over rows of -sum_k onehot[k] * log softmax(logits)[k], stabilized
// via log-sum-exp. Gradient is registered for logits only; onehot rows must
// be exact {0,1} vectors summing to 1.
TensorPtr softmax_cross_entropy(const TensorPtr& logits, const TensorPtr& onehot);

// Forward-only row softmax (prediction path, no tape).
void softmax_rows(const double* logits, double* probs, int64_t rows, int64_t cols);

}  // namespace sptlab::ops
