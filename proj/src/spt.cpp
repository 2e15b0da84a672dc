#include "sptlab/spt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sptlab/adam.hpp"
#include "sptlab/error.hpp"
#include "sptlab/ops.hpp"
#include "sptlab/rng.hpp"

namespace sptlab {
namespace {

double pow01(double x, double g) { return g == 0.0 ? 1.0 : std::pow(x, g); }

// Must mirror ops::weighted_sum over ops::power outputs exactly: ascending-i
// plain multiply-add from zero, then the same sigmoid formula.
double pixel_map(const SptParams& p, double x) {
  double acc = 0.0;
  for (size_t i = 0; i < p.gammas.size(); ++i)
    acc += p.weights[i] * pow01(x, p.gammas[i]);
  return 1.0 / (1.0 + std::exp(-acc));
}

void check_params(const SptParams& p) {
  if (p.gammas.empty() || p.weights.size() != p.gammas.size())
    throw usage_error("spt: weight count != exponent count");
  for (double g : p.gammas)
    if (!(g >= 0.0)) throw usage_error("spt: exponents must be >= 0");
}

// g(x), f, cross-entropy against y, plus the weight penalty. The tape is
// recorded exactly when w requires grad.
TensorPtr batch_objective(const TensorPtr& w, const SptParams& p,
                          const Model& target, const TensorPtr& images,
                          const TensorPtr& y, bool targeted) {
  std::vector<TensorPtr> basis;
  basis.reserve(p.gammas.size());
  for (double g : p.gammas) basis.push_back(ops::power(images, g));
  auto gx = ops::sigmoid(ops::weighted_sum(basis, w));
  auto ce = ops::softmax_cross_entropy(logits(target, gx), y);
  auto data_term = targeted ? ce : ops::scale(ce, -1.0);
  return ops::add(data_term, ops::scale(ops::sum_squares(w), p.alpha));
}

TensorPtr image_slice(const Dataset& d, int64_t at, int64_t n) {
  const int64_t px = d.images->size() / d.size();
  auto out = Tensor::make({n, d.images->shape[1], d.images->shape[2],
                           d.images->shape[3]});
  std::memcpy(out->data.data(), d.images->data.data() + at * px,
              size_t(n * px) * sizeof(double));
  return out;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot write " + tmp);
    os << text;
    if (!os.flush()) throw io_error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw io_error("cannot rename " + tmp + " to " + path);
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size())
    throw format_error("spt file: bad number '" + tok + "'");
  return v;
}

}  // namespace

SptParams SptParams::init(double alpha, uint64_t seed,
                          std::vector<double> gammas) {
  SptParams p;
  p.alpha = alpha;
  p.init_seed = seed;
  if (!gammas.empty()) p.gammas = std::move(gammas);
  Rng rng(Rng::derive(seed, "spt.weights"));
  p.weights.resize(p.gammas.size());
  for (double& w : p.weights) w = 0.5 * rng.normal();
  check_params(p);
  return p;
}

TensorPtr transform(const SptParams& p, const TensorPtr& images) {
  check_params(p);
  for (double v : images->data)
    if (!(v >= 0.0 && v <= 1.0))
      throw domain_error("spt transform: pixel outside [0,1]");

  double lut[256];
  for (int k = 0; k < 256; ++k) lut[k] = pixel_map(p, double(k) / 255.0);

  auto out = Tensor::make(images->shape);
  for (int64_t i = 0; i < images->size(); ++i) {
    const double x = images->data[i];
    const int k = int(std::lround(x * 255.0));
    out->data[i] = (k >= 0 && k <= 255 && double(k) / 255.0 == x)
                       ? lut[k]
                       : pixel_map(p, x);
  }
  return out;
}

double spt_objective(const SptParams& p, const Model& target,
                     const Dataset& data, int targeted_label) {
  check_params(p);
  if (data.size() == 0) throw usage_error("spt objective: empty dataset");
  if (targeted_label > 9)
    throw usage_error("spt objective: target label out of range");
  const bool targeted = targeted_label >= 0;

  auto w = Tensor::from({int64_t(p.weights.size())}, p.weights);
  double ce_sum = 0.0;
  const int64_t chunk = 250;
  for (int64_t at = 0; at < data.size(); at += chunk) {
    const int64_t n = std::min(chunk, data.size() - at);
    std::vector<int> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
      labels[size_t(i)] = targeted ? targeted_label : data.labels[size_t(at + i)];
    std::vector<TensorPtr> basis;
    auto images = image_slice(data, at, n);
    for (double g : p.gammas) basis.push_back(ops::power(images, g));
    auto gx = ops::sigmoid(ops::weighted_sum(basis, w));
    auto ce = ops::softmax_cross_entropy(logits(target, gx), onehot(labels));
    ce_sum += ce->data[0] * double(n);
  }
  double reg = 0.0;
  for (double wi : p.weights) reg += wi * wi;
  const double sign = targeted ? 1.0 : -1.0;
  return sign * ce_sum / double(data.size()) + p.alpha * reg;
}

SptTrace train_spt(SptParams& p, const Model& target, const Dataset& train,
                   const SptTrainConfig& cfg) {
  check_params(p);
  if (train.size() == 0) throw usage_error("spt train: empty dataset");
  if (cfg.epochs < 0) throw usage_error("spt train: negative epochs");
  if (cfg.batch < 1) throw usage_error("spt train: batch must be >= 1");
  if (cfg.targeted_label > 9)
    throw usage_error("spt train: target label out of range");
  const bool targeted = cfg.targeted_label >= 0;

  SptTrace trace;
  trace.initial_objective = spt_objective(p, target, train, cfg.targeted_label);

  auto w = Tensor::from({int64_t(p.weights.size())}, p.weights, true);
  AdamState opt(w->size(), cfg.lr);
  for (int e = 0; e < cfg.epochs; ++e) {
    Batches batches(train, cfg.batch,
                    Rng::derive(cfg.shuffle_seed, "spt.epoch:" + std::to_string(e)));
    double sum = 0.0;
    for (int64_t b = 0; b < batches.count(); ++b) {
      Batch batch = batches.get(b);
      TensorPtr y = targeted
                        ? onehot(std::vector<int>(batch.labels.size(),
                                                  cfg.targeted_label))
                        : batch.onehot;
      w->ensure_grad();
      w->zero_grad();
      auto obj = batch_objective(w, p, target, batch.images, y, targeted);
      sum += obj->data[0];
      backward(obj);
      opt.step(w->data.data(), w->grad.data(), w->size());
    }
    trace.epoch_mean.push_back(sum / double(batches.count()));
  }
  std::copy(w->data.begin(), w->data.end(), p.weights.begin());
  trace.final_objective = spt_objective(p, target, train, cfg.targeted_label);
  return trace;
}

void save_spt(const SptParams& p, const std::string& path) {
  check_params(p);
  std::ostringstream os;
  os << "sptlab-spt v1\n";
  os << "scheme " << p.init_scheme << "\n";
  os << "seed " << p.init_seed << "\n";
  os << "alpha " << fmt17(p.alpha) << "\n";
  os << "gammas";
  for (double g : p.gammas) os << " " << fmt17(g);
  os << "\nweights";
  for (double w : p.weights) os << " " << fmt17(w);
  os << "\n";
  write_text_atomic(path, os.str());
}

SptParams load_spt(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  std::string magic, version;
  if (!(is >> magic >> version) || magic != "sptlab-spt" || version != "v1")
    throw format_error("spt file: bad header in " + path);

  SptParams p;
  p.gammas.clear();
  std::string key;
  if (!(is >> key) || key != "scheme" || !(is >> p.init_scheme))
    throw format_error("spt file: expected scheme");
  if (!(is >> key) || key != "seed" || !(is >> p.init_seed))
    throw format_error("spt file: expected seed");
  std::string tok;
  if (!(is >> key) || key != "alpha" || !(is >> tok))
    throw format_error("spt file: expected alpha");
  p.alpha = parse_double(tok);
  if (!(is >> key) || key != "gammas")
    throw format_error("spt file: expected gammas");
  bool saw_weights = false;
  while (is >> tok) {
    if (tok == "weights") {
      saw_weights = true;
      break;
    }
    p.gammas.push_back(parse_double(tok));
  }
  if (!saw_weights) throw format_error("spt file: expected weights");
  while (is >> tok) p.weights.push_back(parse_double(tok));
  if (p.weights.size() != p.gammas.size() || p.gammas.empty())
    throw format_error("spt file: weight/exponent count mismatch");
  return p;
}

std::string spt_param_path(const std::string& dir, const std::string& dataset,
                           const std::string& target_arch, bool defended,
                           uint64_t init_seed, double alpha) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "-seed%llu-alpha%g.spt",
                static_cast<unsigned long long>(init_seed), alpha);
  return dir + "/" + dataset + "-" + target_arch + (defended ? "-adv" : "") +
         buf;
}

SptParams fit_or_load_spt(const std::string& path, double alpha,
                          uint64_t init_seed, const Model& target,
                          const Dataset& train, const SptTrainConfig& cfg,
                          std::vector<double> gammas) {
  if (std::filesystem::exists(path)) {
    SptParams p = load_spt(path);
    if (p.alpha != alpha || p.init_seed != init_seed)
      throw usage_error(path + " was fitted under a different alpha/seed");
    if (!gammas.empty() && p.gammas != gammas)
      throw usage_error(path + " was fitted with different exponents");
    return p;
  }
  SptParams p = SptParams::init(alpha, init_seed, std::move(gammas));
  train_spt(p, target, train, cfg);
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  save_spt(p, path);
  return p;
}

}  // namespace sptlab
