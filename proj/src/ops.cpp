#include "sptlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "sptlab/error.hpp"
#include "sptlab/kernels.hpp"

namespace sptlab::ops {

namespace {

bool any_grad(std::initializer_list<const TensorPtr*> ts) {
  for (auto* t : ts)
    if (*t && (*t)->requires_grad) return true;
  return false;
}

void check_4d(const TensorPtr& x, const char* who) {
  if (x->shape.size() != 4)
    throw dimension_error(std::string(who) + ": expected a 4-d tensor");
}

// Patch matrix for one image: P[(c*k+ki)*k+kj, oh*Wo+ow] = padded x value.
// Out-of-range reads are zeros (the conv padding).
void im2col(const double* x, int64_t C, int64_t H, int64_t W, int k, int stride,
            int64_t pt, int64_t pl, int64_t Ho, int64_t Wo, double* P) {
  for (int64_t c = 0; c < C; ++c) {
    const double* xc = x + c * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = P + ((c * k + ki) * k + kj) * (Ho * Wo);
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * stride - pt + ki;
          double* out = row + oh * Wo;
          if (ih < 0 || ih >= H) {
            std::fill(out, out + Wo, 0.0);
            continue;
          }
          const double* src = xc + ih * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * stride - pl + kj;
            out[ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col: dP back into the image gradient.
void col2im_add(const double* dP, int64_t C, int64_t H, int64_t W, int k,
                int stride, int64_t pt, int64_t pl, int64_t Ho, int64_t Wo,
                double* dx) {
  for (int64_t c = 0; c < C; ++c) {
    double* dxc = dx + c * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = dP + ((c * k + ki) * k + kj) * (Ho * Wo);
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * stride - pt + ki;
          if (ih < 0 || ih >= H) continue;
          const double* src = row + oh * Wo;
          double* dst = dxc + ih * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * stride - pl + kj;
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride, Padding pad) {
  check_4d(x, "conv2d input");
  check_4d(w, "conv2d kernel");
  if (stride < 1) throw usage_error("conv2d: stride must be >= 1");
  const int64_t N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  const int64_t F = w->shape[0];
  const int k = int(w->shape[2]);
  if (w->shape[1] != C)
    throw dimension_error("conv2d: kernel channels != input channels");
  if (w->shape[3] != k) throw dimension_error("conv2d: kernel must be square");
  if (b->size() != F) throw dimension_error("conv2d: bias length != filter count");

  int64_t Ho, Wo, pt, pl;
  if (pad == Padding::same) {
    Ho = (H + stride - 1) / stride;
    Wo = (W + stride - 1) / stride;
    const int64_t ph = std::max<int64_t>(0, (Ho - 1) * stride + k - H);
    const int64_t pw = std::max<int64_t>(0, (Wo - 1) * stride + k - W);
    pt = ph / 2;
    pl = pw / 2;
  } else {
    if (k > H || k > W)
      throw dimension_error("conv2d: kernel larger than unpadded input");
    Ho = (H - k) / stride + 1;
    Wo = (W - k) / stride + 1;
    pt = pl = 0;
  }
  const int64_t CKK = C * k * k, HW = Ho * Wo;

  auto out = Tensor::make({N, F, Ho, Wo}, any_grad({&x, &w, &b}));
  {
    std::vector<double> P(CKK * HW);
    for (int64_t n = 0; n < N; ++n) {
      im2col(x->data.data() + n * C * H * W, C, H, W, k, stride, pt, pl, Ho, Wo,
             P.data());
      double* on = out->data.data() + n * F * HW;
      kern::gemm(false, false, F, HW, CKK, w->data.data(), CKK, P.data(), HW,
                 on, HW, false);
      for (int64_t f = 0; f < F; ++f) {
        const double bf = b->data[f];
        for (int64_t i = 0; i < HW; ++i) on[f * HW + i] += bf;
      }
    }
  }

  if (out->requires_grad) {
    out->parents = {x, w, b};
    Tensor* self = out.get();
    Tensor *px = x.get(), *pw = w.get(), *pb = b.get();
    out->backprop = [=]() {
      std::vector<double> P(CKK * HW), dP;
      if (px->requires_grad) {
        dP.resize(CKK * HW);
        px->ensure_grad();
      }
      if (pw->requires_grad) pw->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      for (int64_t n = 0; n < N; ++n) {
        const double* don = self->grad.data() + n * F * HW;
        if (pw->requires_grad) {
          im2col(px->data.data() + n * C * H * W, C, H, W, k, stride, pt, pl,
                 Ho, Wo, P.data());
          kern::gemm(false, true, F, CKK, HW, don, HW, P.data(), HW,
                     pw->grad.data(), CKK, true);
        }
        if (pb->requires_grad) {
          for (int64_t f = 0; f < F; ++f) {
            double s = 0;
            for (int64_t i = 0; i < HW; ++i) s += don[f * HW + i];
            pb->grad[f] += s;
          }
        }
        if (px->requires_grad) {
          kern::gemm(true, false, CKK, HW, F, pw->data.data(), CKK, don, HW,
                     dP.data(), HW, false);
          col2im_add(dP.data(), C, H, W, k, stride, pt, pl, Ho, Wo,
                     px->grad.data() + n * C * H * W);
        }
      }
    };
  }
  return out;
}

TensorPtr maxpool2d(const TensorPtr& x, int window, int stride) {
  check_4d(x, "maxpool2d input");
  if (window < 1 || stride < 1)
    throw usage_error("maxpool2d: window and stride must be >= 1");
  const int64_t N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  if (window > H || window > W)
    throw dimension_error("maxpool2d: window larger than input");
  const int64_t Ho = (H + stride - 1) / stride;
  const int64_t Wo = (W + stride - 1) / stride;

  auto out = Tensor::make({N, C, Ho, Wo}, x->requires_grad);
  auto argmax = std::make_shared<std::vector<int64_t>>(out->size());
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const double* src = x->data.data() + nc * H * W;
    double* dst = out->data.data() + nc * Ho * Wo;
    int64_t* am = argmax->data() + nc * Ho * Wo;
    for (int64_t oh = 0; oh < Ho; ++oh) {
      for (int64_t ow = 0; ow < Wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_at = -1;
        for (int64_t ih = oh * stride; ih < std::min<int64_t>(oh * stride + window, H); ++ih)
          for (int64_t iw = ow * stride; iw < std::min<int64_t>(ow * stride + window, W); ++iw)
            if (src[ih * W + iw] > best) {
              best = src[ih * W + iw];
              best_at = ih * W + iw;
            }
        dst[oh * Wo + ow] = best;
        am[oh * Wo + ow] = nc * H * W + best_at;
      }
    }
  }

  if (out->requires_grad) {
    out->parents = {x};
    Tensor* self = out.get();
    Tensor* px = x.get();
    out->backprop = [self, px, argmax]() {
      px->ensure_grad();
      for (int64_t i = 0; i < self->size(); ++i)
        px->grad[(*argmax)[i]] += self->grad[i];
    };
  }
  return out;
}

TensorPtr affine(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  if (x->shape.size() != 2 || w->shape.size() != 2 || b->shape.size() != 1)
    throw dimension_error("affine: expected x [N,D], w [D,M], b [M]");
  const int64_t N = x->shape[0], D = x->shape[1], M = w->shape[1];
  if (w->shape[0] != D) throw dimension_error("affine: inner dimensions disagree");
  if (b->shape[0] != M) throw dimension_error("affine: bias length != output width");

  auto out = Tensor::make({N, M}, any_grad({&x, &w, &b}));
  kern::gemm(false, false, N, M, D, x->data.data(), D, w->data.data(), M,
             out->data.data(), M, false);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t j = 0; j < M; ++j) out->data[n * M + j] += b->data[j];

  if (out->requires_grad) {
    out->parents = {x, w, b};
    Tensor* self = out.get();
    Tensor *px = x.get(), *pw = w.get(), *pb = b.get();
    out->backprop = [=]() {
      if (px->requires_grad) {
        px->ensure_grad();
        kern::gemm(false, true, N, D, M, self->grad.data(), M, pw->data.data(),
                   M, px->grad.data(), D, true);
      }
      if (pw->requires_grad) {
        pw->ensure_grad();
        kern::gemm(true, false, D, M, N, px->data.data(), D, self->grad.data(),
                   M, pw->grad.data(), M, true);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
          for (int64_t j = 0; j < M; ++j) pb->grad[j] += self->grad[n * M + j];
      }
    };
  }
  return out;
}

TensorPtr relu(const TensorPtr& x) {
  auto out = Tensor::make(x->shape, x->requires_grad);
  kern::relu_forward(x->data.data(), out->data.data(), x->data.size());
  if (out->requires_grad) {
    out->parents = {x};
    Tensor* self = out.get();
    Tensor* px = x.get();
    out->backprop = [self, px]() {
      px->ensure_grad();
      kern::relu_backward(px->data.data(), self->grad.data(), px->grad.data(),
                          px->data.size());
    };
  }
  return out;
}

TensorPtr sigmoid(const TensorPtr& x) {
  auto out = Tensor::make(x->shape, x->requires_grad);
  for (int64_t i = 0; i < x->size(); ++i)
    out->data[i] = 1.0 / (1.0 + std::exp(-x->data[i]));
  if (out->requires_grad) {
    out->parents = {x};
    Tensor* self = out.get();
    Tensor* px = x.get();
    out->backprop = [self, px]() {
      px->ensure_grad();
      for (int64_t i = 0; i < self->size(); ++i) {
        const double y = self->data[i];
        px->grad[i] += y * (1.0 - y) * self->grad[i];
      }
    };
  }
  return out;
}

TensorPtr power(const TensorPtr& x, double g) {
  if (g < 0) throw usage_error("power: exponent must be >= 0");
  for (double v : x->data)
    if (!(v >= 0.0 && v <= 1.0))
      throw domain_error("power: input outside [0,1]");

  auto out = Tensor::make(x->shape, x->requires_grad);
  if (g == 0.0) {
    std::fill(out->data.begin(), out->data.end(), 1.0);  // 0^0 = 1 by convention
  } else {
    for (int64_t i = 0; i < x->size(); ++i)
      out->data[i] = std::pow(x->data[i], g);
  }
  if (out->requires_grad) {
    out->parents = {x};
    Tensor* self = out.get();
    Tensor* px = x.get();
    out->backprop = [self, px, g]() {
      px->ensure_grad();
      if (g == 0.0) return;
      for (int64_t i = 0; i < self->size(); ++i) {
        const double xi = g < 1.0 ? std::max(px->data[i], 1e-6) : px->data[i];
        px->grad[i] += g * std::pow(xi, g - 1.0) * self->grad[i];
      }
    };
  }
  return out;
}

TensorPtr weighted_sum(const std::vector<TensorPtr>& basis, const TensorPtr& w) {
  if (basis.empty()) throw usage_error("weighted_sum: empty basis");
  if (w->size() != int64_t(basis.size()))
    throw dimension_error("weighted_sum: weight count != basis count");
  for (const auto& bt : basis)
    if (bt->shape != basis[0]->shape)
      throw dimension_error("weighted_sum: basis shapes differ");

  bool rg = w->requires_grad;
  for (const auto& bt : basis) rg = rg || bt->requires_grad;
  auto out = Tensor::make(basis[0]->shape, rg);
  const int64_t n = out->size();
  for (size_t i = 0; i < basis.size(); ++i) {
    const double wi = w->data[i];
    const double* src = basis[i]->data.data();
    double* dst = out->data.data();
    for (int64_t j = 0; j < n; ++j) dst[j] += wi * src[j];
  }

  if (out->requires_grad) {
    out->parents = basis;
    out->parents.push_back(w);
    Tensor* self = out.get();
    Tensor* pw = w.get();
    std::vector<Tensor*> pb(basis.size());
    for (size_t i = 0; i < basis.size(); ++i) pb[i] = basis[i].get();
    out->backprop = [self, pw, pb, n]() {
      if (pw->requires_grad) {
        pw->ensure_grad();
        for (size_t i = 0; i < pb.size(); ++i) {
          double s = 0;
          const double* src = pb[i]->data.data();
          for (int64_t j = 0; j < n; ++j) s += src[j] * self->grad[j];
          pw->grad[i] += s;
        }
      }
      for (size_t i = 0; i < pb.size(); ++i) {
        if (!pb[i]->requires_grad) continue;
        pb[i]->ensure_grad();
        const double wi = pw->data[i];
        for (int64_t j = 0; j < n; ++j) pb[i]->grad[j] += wi * self->grad[j];
      }
    };
  }
  return out;
}

TensorPtr reshape(const TensorPtr& x, std::vector<int64_t> shape) {
  if (shape_size(shape) != x->size())
    throw dimension_error("reshape: element count changes");
  auto out = Tensor::make(std::move(shape), x->requires_grad);
  out->data = x->data;
  if (out->requires_grad) {
    out->parents = {x};
    Tensor* self = out.get();
    Tensor* px = x.get();
    out->backprop = [self, px]() {
      px->ensure_grad();
      for (int64_t i = 0; i < self->size(); ++i) px->grad[i] += self->grad[i];
    };
  }
  return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) throw dimension_error("add: shapes differ");
  auto out = Tensor::make(a->shape, any_grad({&a, &b}));
  for (int64_t i = 0; i < a->size(); ++i)
    out->data[i] = a->data[i] + b->data[i];
  if (out->requires_grad) {
    out->parents = {a, b};
    Tensor* self = out.get();
    Tensor *pa = a.get(), *pb = b.get();
    out->backprop = [self, pa, pb]() {
      for (Tensor* p : {pa, pb}) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (int64_t i = 0; i < self->size(); ++i) p->grad[i] += self->grad[i];
      }
    };
  }
  return out;
}

TensorPtr scale(const TensorPtr& a, double s) {
  auto out = Tensor::make(a->shape, a->requires_grad);
  for (int64_t i = 0; i < a->size(); ++i) out->data[i] = s * a->data[i];
  if (out->requires_grad) {
    out->parents = {a};
    Tensor* self = out.get();
    Tensor* pa = a.get();
    out->backprop = [self, pa, s]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < self->size(); ++i)
        pa->grad[i] += s * self->grad[i];
    };
  }
  return out;
}

TensorPtr sum_squares(const TensorPtr& a) {
  auto out = Tensor::make({1}, a->requires_grad);
  double s = 0;
  for (double v : a->data) s += v * v;
  out->data[0] = s;
  if (out->requires_grad) {
    out->parents = {a};
    Tensor* self = out.get();
    Tensor* pa = a.get();
    out->backprop = [self, pa]() {
      pa->ensure_grad();
      const double g = self->grad[0];
      for (int64_t i = 0; i < pa->size(); ++i)
        pa->grad[i] += 2.0 * pa->data[i] * g;
    };
  }
  return out;
}

void softmax_rows(const double* logits, double* probs, int64_t rows, int64_t cols) {
  for (int64_t n = 0; n < rows; ++n) {
    const double* l = logits + n * cols;
    double* p = probs + n * cols;
    double mx = l[0];
    for (int64_t k = 1; k < cols; ++k) mx = std::max(mx, l[k]);
    double z = 0;
    for (int64_t k = 0; k < cols; ++k) {
      p[k] = std::exp(l[k] - mx);
      z += p[k];
    }
    for (int64_t k = 0; k < cols; ++k) p[k] /= z;
  }
}

TensorPtr softmax_cross_entropy(const TensorPtr& logits, const TensorPtr& onehot) {
  if (logits->shape.size() != 2 || onehot->shape != logits->shape)
    throw dimension_error("softmax_cross_entropy: need matching [N,K] tensors");
  const int64_t N = logits->shape[0], K = logits->shape[1];

  std::vector<int64_t> truth(N);
  for (int64_t n = 0; n < N; ++n) {
    int64_t ones = 0, at = -1;
    for (int64_t k = 0; k < K; ++k) {
      const double v = onehot->data[n * K + k];
      if (v == 1.0) {
        ++ones;
        at = k;
      } else if (v != 0.0) {
        throw validation_error("softmax_cross_entropy: row is not one-hot");
      }
    }
    if (ones != 1)
      throw validation_error("softmax_cross_entropy: row is not one-hot");
    truth[n] = at;
  }

  auto out = Tensor::make({1}, logits->requires_grad);
  auto probs = std::make_shared<std::vector<double>>(N * K);
  double total = 0;
  for (int64_t n = 0; n < N; ++n) {
    const double* l = logits->data.data() + n * K;
    double mx = l[0];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, l[k]);
    double z = 0;
    for (int64_t k = 0; k < K; ++k) z += std::exp(l[k] - mx);
    const double lse = mx + std::log(z);
    total += lse - l[truth[n]];
    for (int64_t k = 0; k < K; ++k)
      (*probs)[n * K + k] = std::exp(l[k] - lse);
  }
  out->data[0] = total / double(N);

  if (out->requires_grad) {
    out->parents = {logits, onehot};
    Tensor* self = out.get();
    Tensor* pl = logits.get();
    out->backprop = [self, pl, probs, N, K, truth = std::move(truth)]() {
      pl->ensure_grad();
      const double g = self->grad[0] / double(N);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t k = 0; k < K; ++k)
          pl->grad[n * K + k] += ((*probs)[n * K + k] - (k == truth[n] ? 1.0 : 0.0)) * g;
    };
  }
  return out;
}

}  // namespace sptlab::ops
