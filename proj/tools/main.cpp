// spt-lab: reproducible gray-level-transformation attack and defense
// experiments on MNIST-class image classifiers.
//
// Subcommands: train-classifiers, attack, adv-train, matrix,
// export-examples, verify. Global flags configure the experiment; a config
// file (--config) supplies values under CLI flags in precedence. Reports and
// artifacts carry no timestamps; wall-clock lines go to <out>/run.log only.

#include <CLI11.hpp>

#include <unistd.h>

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sptlab/attacks.hpp"
#include "sptlab/config.hpp"
#include "sptlab/data.hpp"
#include "sptlab/error.hpp"
#include "sptlab/eval.hpp"
#include "sptlab/kernels.hpp"
#include "sptlab/models.hpp"
#include "sptlab/ops.hpp"
#include "sptlab/rng.hpp"
#include "sptlab/spt.hpp"
#include "sptlab/tensor.hpp"

namespace {

using namespace sptlab;

constexpr int64_t kBatch = 64;

// Wall-clock lines are confined to this sidecar so every other artifact is
// byte-reproducible.
class RunLog {
 public:
  explicit RunLog(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    os_.open(out_dir + "/run.log", std::ios::app);
  }

  void line(const std::string& text) {
    if (!os_) return;
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    os_ << stamp << " " << text << "\n" << std::flush;
  }

 private:
  std::ofstream os_;
};

Arch arch_or_throw(const std::string& name) {
  if (auto a = arch_from(name)) return *a;
  throw usage_error("unknown architecture '" + name +
                    "' (valid: C_p, C_a0, C_a1, C_a2, C_a3)");
}

Model need_checkpoint(const RunConfig& c, const std::string& arch,
                      bool defended) {
  arch_or_throw(arch);
  const std::string path = checkpoint_path(c, arch, defended);
  if (!std::filesystem::exists(path))
    throw io_error("missing checkpoint " + path + " (run: spt-lab " +
                   (defended ? "adv-train" : "train-classifiers") + " first)");
  return load_checkpoint(path);
}

Dataset load_split(const RunConfig& c, const std::string& split) {
  return load_dataset(c.dataset, dataset_dir(c), split, c.subset);
}

// first n examples of a dataset as a standalone batch
std::pair<TensorPtr, std::vector<int>> head(const Dataset& d, int64_t n) {
  n = std::min(n, d.size());
  if (n < 1) throw usage_error("no examples to take");
  const int64_t px = d.images->size() / d.size();
  auto images = Tensor::make({n, d.images->shape[1], d.images->shape[2],
                              d.images->shape[3]});
  std::memcpy(images->data.data(), d.images->data.data(),
              size_t(n * px) * sizeof(double));
  std::vector<int> labels(d.labels.begin(), d.labels.begin() + n);
  return {images, labels};
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string s;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) s += sep;
    s += parts[i];
  }
  return s;
}

std::string percent(double frac) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * frac);
  return buf;
}

// ---------------------------------------------------------------------------
// train-classifiers

Model train_one(const RunConfig& c, const Dataset& train, const Dataset& test,
                const std::string& arch, int epochs) {
  Model m = build(arch_or_throw(arch), c.seed);
  train_classifier(m, train, epochs, kBatch,
                   Rng::derive(c.seed, "train:" + arch));
  m.test_accuracy = accuracy(m, test.images, test.labels);
  const std::string path = checkpoint_path(c, arch, false);
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  save_checkpoint(m, path);
  std::printf("trained %-5s clean accuracy %s  (%d epochs, %" PRId64
              " parameters)  -> %s\n",
              arch.c_str(), percent(m.test_accuracy).c_str(), m.epochs_trained,
              m.param_count(), path.c_str());
  return m;
}

void cmd_train_classifiers(const RunConfig& c,
                           const std::vector<std::string>& archs, int epochs) {
  if (epochs < 1) throw usage_error("epochs must be >= 1");
  for (const std::string& arch : archs) arch_or_throw(arch);
  write_effective_config(c, "train-classifiers",
                         {{"arch", join(archs, ",")},
                          {"epochs", std::to_string(epochs)}});
  Dataset train = load_split(c, "train");
  Dataset test = load_split(c, "test");
  std::printf("dataset %s: %" PRId64 " train / %" PRId64 " test images\n",
              c.dataset.c_str(), train.size(), test.size());
  for (const std::string& arch : archs) train_one(c, train, test, arch, epochs);
}

// ---------------------------------------------------------------------------
// attack

void print_attack_header(const RunConfig& c, const Model& m,
                         const std::string& attack, const std::string& target,
                         int64_t n_test) {
  std::printf("attack %s on %s (%s, defense %s): %" PRId64 " test images\n",
              attack.c_str(), target.c_str(), c.dataset.c_str(),
              m.defense.empty() ? "none" : m.defense.c_str(), n_test);
}

void print_accuracy_lines(const Model& m, const TensorPtr& adv,
                          const Dataset& test) {
  std::printf("clean accuracy: %s\n",
              percent(accuracy(m, test.images, test.labels)).c_str());
  auto preds = predict_labels(m, adv);
  int64_t ok = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    ok += preds[i] == test.labels[i];
  std::printf("adversarial accuracy: %s (%" PRId64 "/%" PRId64 ")\n",
              percent(double(ok) / double(preds.size())).c_str(), ok,
              int64_t(preds.size()));
}

void cmd_attack(const RunConfig& c, const std::string& attack,
                const std::string& target, bool defended) {
  if (attack != "spt" && attack != "fgsm" && attack != "pgd")
    throw usage_error("unknown attack '" + attack +
                      "' (valid: spt, fgsm, pgd)");
  write_effective_config(c, "attack",
                         {{"attack", attack},
                          {"target", target},
                          {"defended", defended ? "true" : "false"}});
  Model m = need_checkpoint(c, target, defended);
  Dataset test = load_split(c, "test");
  print_attack_header(c, m, attack, target, test.size());

  if (attack == "spt") {
    Dataset train = load_split(c, "train");
    const std::string path = spt_param_path(c.out + "/spt", c.dataset, target,
                                            defended, c.init_seed, c.alpha);
    const bool existed = std::filesystem::exists(path);
    SptParams p = fit_or_load_spt(path, c.alpha, c.init_seed, m, train,
                                  spt_train_of(c), c.gammas);
    std::printf("parameter file: %s (%s)\n", path.c_str(),
                existed ? "reused" : "fitted now");
    auto adv = transform(p, test.images);
    print_accuracy_lines(m, adv, test);
    PredictionStats stats = prediction_stats(predict_labels(m, adv));
    std::printf("prediction histogram:");
    for (int k = 0; k < 10; ++k)
      std::printf(" %d:%" PRId64, k, stats.counts[size_t(k)]);
    std::printf("\n");
    std::printf("modal class: %d (%s of predictions)\n", stats.modal_class,
                percent(stats.modal_fraction).c_str());
    StructureReport srep = check_structure(test.images, adv);
    std::printf("structure check: %" PRId64 " images, %" PRId64
                " value groups, %" PRId64 " violations\n",
                srep.images, srep.value_groups, srep.violations);
  } else if (attack == "fgsm") {
    auto adv = fgsm(m, test.images, test.labels, c.epsilon);
    print_accuracy_lines(m, adv, test);
  } else {
    PerturbationConfig p = pert_of(c);
    p.seed = Rng::derive(c.seed, "pgd:" + target);
    auto adv = pgd(m, test.images, test.labels, p);
    print_accuracy_lines(m, adv, test);
  }
}

// ---------------------------------------------------------------------------
// adv-train

void cmd_adv_train(const RunConfig& c, const std::string& arch, int epochs) {
  if (epochs < 1) throw usage_error("epochs must be >= 1");
  arch_or_throw(arch);
  write_effective_config(c, "adv-train",
                         {{"arch", arch}, {"epochs", std::to_string(epochs)}});
  Dataset train = load_split(c, "train");
  Dataset test = load_split(c, "test");
  Model m = build(arch_or_throw(arch), c.seed);
  adversarial_train(m, train, epochs, kBatch,
                    Rng::derive(c.seed, "advtrain:" + arch), pert_of(c));
  m.test_accuracy = accuracy(m, test.images, test.labels);
  const std::string path = checkpoint_path(c, arch, true);
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  save_checkpoint(m, path);
  std::printf("adversarially trained %s: clean accuracy %s  (%d epochs, %s)"
              "  -> %s\n",
              arch.c_str(), percent(m.test_accuracy).c_str(), epochs,
              m.defense.c_str(), path.c_str());
}

// ---------------------------------------------------------------------------
// matrix

std::vector<Model> gather_targets(const RunConfig& c, const Dataset& train,
                                  const Dataset& test, bool train_missing,
                                  int epochs) {
  std::vector<Model> targets;
  std::vector<std::string> missing;
  for (Arch a : kAllArchs) {
    const std::string name = arch_name(a);
    const std::string path = checkpoint_path(c, name, false);
    if (std::filesystem::exists(path)) {
      targets.push_back(load_checkpoint(path));
    } else if (train_missing) {
      targets.push_back(train_one(c, train, test, name, epochs));
    } else {
      missing.push_back(path);
    }
  }
  if (!missing.empty())
    throw usage_error("missing checkpoints: " + join(missing, ", ") +
                      " (run spt-lab train-classifiers, or pass"
                      " --train-missing)");
  return targets;
}

void export_spt_grid(const RunConfig& c, const Model& m, const Dataset& test,
                     const Dataset& train, int64_t count) {
  const std::string arch = arch_name(m.arch);
  const std::string path =
      spt_param_path(c.out + "/spt", c.dataset, arch, !m.defense.empty(),
                     c.init_seed, c.alpha);
  SptParams p = fit_or_load_spt(path, c.alpha, c.init_seed, m, train,
                                spt_train_of(c), c.gammas);
  auto [images, labels] = head(test, count);
  auto adv = transform(p, images);
  const std::string prefix = c.dataset + "-" + arch + "-spt";
  export_examples(c.out + "/examples", prefix, images, adv, labels,
                  predict_labels(m, images), predict_labels(m, adv),
                  images->shape[0]);
  std::printf("image grid: %s/examples/%s-grid.pgm\n", c.out.c_str(),
              prefix.c_str());
}

void cmd_matrix(const RunConfig& c, const std::string& mode,
                bool train_missing, int epochs) {
  if (mode != "whitebox" && mode != "blackbox")
    throw usage_error("unknown mode '" + mode + "' (whitebox|blackbox)");
  write_effective_config(c, "matrix",
                         {{"mode", mode},
                          {"train-missing", train_missing ? "true" : "false"},
                          {"epochs", std::to_string(epochs)}});
  Dataset train = load_split(c, "train");
  Dataset test = load_split(c, "test");
  std::vector<Model> targets =
      gather_targets(c, train, test, train_missing, epochs);

  MatrixJob job;
  job.train = &train;
  job.test = &test;
  job.alpha = c.alpha;
  job.spt_seed = c.init_seed;
  job.spt = spt_train_of(c);
  job.gammas = c.gammas;
  job.pert = pert_of(c);
  job.pert_seed = c.seed;
  job.cells_dir = c.out + "/cells";
  job.spt_dir = c.out + "/spt";
  job.jobs = c.jobs;

  EvalReport rep = mode == "whitebox" ? run_whitebox_matrix(targets, job)
                                      : run_blackbox_matrix(targets, job);
  std::filesystem::create_directories(c.out + "/reports");
  const std::string report_path =
      c.out + "/reports/" + mode + "-" + c.dataset + ".txt";
  write_report(rep, report_path);
  std::fputs(report_text(rep).c_str(), stdout);
  std::printf("\nreport: %s\n", report_path.c_str());

  const int64_t grid_n = std::min<int64_t>(16, test.size());
  if (mode == "whitebox") {
    for (const Model& t : targets) export_spt_grid(c, t, test, train, grid_n);
  } else {
    export_spt_grid(c, targets[0], test, train, grid_n);
  }
}

// ---------------------------------------------------------------------------
// export-examples

void cmd_export_examples(const RunConfig& c, const std::string& target,
                         const std::string& attack, bool defended,
                         int64_t count) {
  if (attack != "spt" && attack != "fgsm" && attack != "pgd")
    throw usage_error("unknown attack '" + attack +
                      "' (valid: spt, fgsm, pgd)");
  if (count < 1) throw usage_error("count must be >= 1");
  write_effective_config(c, "export-examples",
                         {{"target", target},
                          {"attack", attack},
                          {"defended", defended ? "true" : "false"},
                          {"count", std::to_string(count)}});
  Model m = need_checkpoint(c, target, defended);
  Dataset test = load_split(c, "test");
  auto [images, labels] = head(test, count);

  TensorPtr adv;
  if (attack == "spt") {
    Dataset train = load_split(c, "train");
    const std::string path = spt_param_path(c.out + "/spt", c.dataset, target,
                                            defended, c.init_seed, c.alpha);
    SptParams p = fit_or_load_spt(path, c.alpha, c.init_seed, m, train,
                                  spt_train_of(c), c.gammas);
    adv = transform(p, images);
  } else if (attack == "fgsm") {
    adv = fgsm(m, images, labels, c.epsilon);
  } else {
    PerturbationConfig p = pert_of(c);
    p.seed = Rng::derive(c.seed, "pgd:" + target);
    adv = pgd(m, images, labels, p);
  }

  const std::string prefix = c.dataset + "-" + target + "-" + attack;
  export_examples(c.out + "/examples", prefix, images, adv, labels,
                  predict_labels(m, images), predict_labels(m, adv),
                  images->shape[0]);
  std::printf("exported %" PRId64 " example pairs to %s/examples"
              " (prefix %s)\n",
              images->shape[0], c.out.c_str(), prefix.c_str());
  std::printf("grid: %s/examples/%s-grid.pgm\n", c.out.c_str(),
              prefix.c_str());
  std::printf("manifest: %s/examples/%s-manifest.txt\n", c.out.c_str(),
              prefix.c_str());
}

// ---------------------------------------------------------------------------
// verify

// Each check returns "" on success or a failure description.
struct Check {
  std::string name;
  std::function<std::string()> run;
};

std::string check_kernels() {
  const auto impls = kern::available();
  const int64_t m = 37, n = 29, k = 53;
  Rng r(12345);
  std::vector<double> a(size_t(m * k)), b(size_t(k * n));
  for (auto& v : a) v = r.uniform(-1.0, 1.0);
  for (auto& v : b) v = r.uniform(-1.0, 1.0);

  std::vector<std::string> names;
  for (const kern::Kernels* impl : impls) names.push_back(impl->name);

  for (bool ta : {false, true})
    for (bool tb : {false, true})
      for (bool acc : {false, true}) {
        const int64_t lda = ta ? m : k, ldb = tb ? k : n;
        std::vector<double> ref(size_t(m * n), 0.5), got;
        kern::gemm_with(kern::scalar_kernels(), ta, tb, m, n, k, a.data(), lda,
                        b.data(), ldb, ref.data(), n, acc);
        for (const kern::Kernels* impl : impls) {
          got.assign(size_t(m * n), 0.5);
          kern::gemm_with(*impl, ta, tb, m, n, k, a.data(), lda, b.data(), ldb,
                          got.data(), n, acc);
          if (std::memcmp(ref.data(), got.data(), got.size() * sizeof(double)))
            return std::string("gemm mismatch: ") + impl->name;
        }
      }

  const size_t en = 1001;
  std::vector<double> x(en), gy(en), ref(en), got(en), gref(en), ggot(en);
  for (auto& v : x) v = r.uniform(-1.0, 1.0);
  for (auto& v : gy) v = r.uniform(-1.0, 1.0);
  kern::scalar_kernels().relu_fwd(x.data(), ref.data(), en);
  std::fill(gref.begin(), gref.end(), 0.25);
  kern::scalar_kernels().relu_bwd(x.data(), gy.data(), gref.data(), en);
  for (const kern::Kernels* impl : impls) {
    impl->relu_fwd(x.data(), got.data(), en);
    ggot.assign(en, 0.25);
    impl->relu_bwd(x.data(), gy.data(), ggot.data(), en);
    if (std::memcmp(ref.data(), got.data(), en * sizeof(double)) ||
        std::memcmp(gref.data(), ggot.data(), en * sizeof(double)))
      return std::string("relu mismatch: ") + impl->name;
  }

  std::vector<double> p0(en), m0(en), v0(en), g0(en);
  for (auto& v : p0) v = r.uniform(-1.0, 1.0);
  for (auto& v : m0) v = r.uniform(-0.1, 0.1);
  for (auto& v : v0) v = r.uniform(0.0, 0.1);
  for (auto& v : g0) v = r.uniform(-1.0, 1.0);
  const double bc1 = 1.0 - std::pow(0.9, 3), bc2 = 1.0 - std::pow(0.999, 3);
  auto pr = p0, mr = m0, vr = v0;
  kern::scalar_kernels().adam(pr.data(), mr.data(), vr.data(), g0.data(), en,
                              0.9, 0.999, 1e-8, 1e-3, bc1, bc2);
  for (const kern::Kernels* impl : impls) {
    auto pg = p0, mg = m0, vg = v0;
    impl->adam(pg.data(), mg.data(), vg.data(), g0.data(), en, 0.9, 0.999,
               1e-8, 1e-3, bc1, bc2);
    if (std::memcmp(pr.data(), pg.data(), en * sizeof(double)) ||
        std::memcmp(mr.data(), mg.data(), en * sizeof(double)) ||
        std::memcmp(vr.data(), vg.data(), en * sizeof(double)))
      return std::string("adam mismatch: ") + impl->name;
  }
  return "";
}

std::string check_rng() {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i)
    if (a.uniform() != b.uniform()) return "equal seeds diverged";
  if (Rng::derive(1, "a") == Rng::derive(1, "b"))
    return "derive is tag-insensitive";
  if (Rng::derive(1, "a") != Rng::derive(1, "a"))
    return "derive is unstable";
  Rng c(7);
  auto perm = c.permutation(100);
  std::vector<bool> seen(100, false);
  for (int64_t i : perm) {
    if (i < 0 || i >= 100 || seen[size_t(i)]) return "permutation corrupt";
    seen[size_t(i)] = true;
  }
  if (digest_hex("") != "cbf29ce484222325") return "digest drifted";
  return "";
}

std::string check_autodiff() {
  Rng r(31);
  auto fill = [&](std::vector<int64_t> shape, bool rg) {
    auto t = Tensor::make(std::move(shape), rg);
    for (auto& v : t->data) v = r.uniform(-0.5, 0.5);
    return t;
  };
  auto x = fill({2, 3}, false);
  auto w1 = fill({3, 4}, true), b1 = fill({4}, true);
  auto w2 = fill({4, 10}, true), b2 = fill({10}, true);
  auto y = onehot({1, 7});
  auto forward = [&]() {
    return ops::softmax_cross_entropy(
        ops::affine(ops::relu(ops::affine(x, w1, b1)), w2, b2), y);
  };
  auto loss = forward();
  backward(loss);
  const double h = 1e-6;
  for (auto& [t, idx] : std::vector<std::pair<TensorPtr, size_t>>{
           {w1, 5}, {b1, 2}, {w2, 17}, {b2, 3}}) {
    const double keep = t->data[idx];
    t->data[idx] = keep + h;
    const double up = forward()->data[0];
    t->data[idx] = keep - h;
    const double down = forward()->data[0];
    t->data[idx] = keep;
    const double fd = (up - down) / (2 * h);
    const double an = t->grad[idx];
    if (std::fabs(fd - an) > 1e-4 * std::max({1.0, std::fabs(fd)}))
      return "gradient mismatch (fd " + fmt_double(fd) + ", analytic " +
             fmt_double(an) + ")";
  }
  return "";
}

Dataset synthetic_grid(int64_t n, uint64_t seed) {
  Dataset d;
  d.name = "synthetic";
  d.split = "test";
  d.images = Tensor::make({n, 1, 28, 28});
  Rng r(seed);
  for (auto& v : d.images->data) v = double(r.below(256)) / 255.0;
  d.labels.resize(size_t(n));
  for (int64_t i = 0; i < n; ++i) d.labels[size_t(i)] = int(i % 10);
  return d;
}

std::string check_structure_invariant() {
  Dataset d = synthetic_grid(4, 77);
  SptParams p = SptParams::init(0.0, 7);
  StructureReport ok = check_structure(d.images, transform(p, d.images));
  if (!ok.preserved())
    return "transformation broke " + std::to_string(ok.violations) +
           " value groups";
  if (ok.value_groups == 0) return "no value groups found";
  Model m = build(Arch::Ca2, 3);
  StructureReport bad =
      check_structure(d.images, fgsm(m, d.images, d.labels, 0.25));
  if (bad.violations == 0) return "negative control not detected";
  return "";
}

std::string check_containment() {
  Dataset d = synthetic_grid(4, 78);
  Model m = build(Arch::Ca2, 4);
  PerturbationConfig cfg;
  cfg.epsilon = 0.25;
  cfg.step = 0.1;
  cfg.iters = 5;
  cfg.seed = 9;
  auto adv = pgd(m, d.images, d.labels, cfg);
  for (int64_t i = 0; i < adv->size(); ++i) {
    // bounds spelled exactly like the attack's ball clamp, so the check is
    // exact rather than tolerance-based
    const double lo = std::max(0.0, d.images->data[i] - cfg.epsilon);
    const double hi = std::min(1.0, d.images->data[i] + cfg.epsilon);
    if (adv->data[i] < lo || adv->data[i] > hi)
      return "pixel escaped the ball/box";
  }
  return "";
}

std::string scratch_path(const char* suffix) {
  return (std::filesystem::temp_directory_path() /
          ("sptlab-verify-" + std::to_string(getpid()) + suffix))
      .string();
}

std::string check_checkpoint_roundtrip() {
  const std::string path = scratch_path(".ckpt");
  Model m = build(Arch::Ca2, 11);
  m.epochs_trained = 2;
  m.test_accuracy = 0.5;
  m.defense = "pgd_adv_train(eps=0.3,step=0.01,iters=40)";
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);
  std::filesystem::remove(path);
  if (back.arch != m.arch || back.seed != m.seed ||
      back.epochs_trained != m.epochs_trained ||
      back.test_accuracy != m.test_accuracy || back.defense != m.defense)
    return "metadata drifted";
  auto pa = m.named_params(), pb = back.named_params();
  if (pa.size() != pb.size()) return "parameter block count drifted";
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i].first != pb[i].first ||
        std::memcmp(pa[i].second->data.data(), pb[i].second->data.data(),
                    pa[i].second->data.size() * sizeof(double)))
      return "parameters drifted in " + pa[i].first;
  return "";
}

std::string check_spt_roundtrip() {
  const std::string path = scratch_path(".spt");
  SptParams p = SptParams::init(0.25, 9);
  p.weights[3] = 1.0 / 3.0;
  save_spt(p, path);
  SptParams back = load_spt(path);
  std::filesystem::remove(path);
  if (back.alpha != p.alpha || back.init_seed != p.init_seed ||
      back.init_scheme != p.init_scheme || back.gammas != p.gammas)
    return "header drifted";
  for (size_t i = 0; i < p.weights.size(); ++i)
    if (std::memcmp(&back.weights[i], &p.weights[i], sizeof(double)))
      return "weights drifted";
  return "";
}

std::string check_datasets(const RunConfig& c, std::string& note) {
  if (c.data_dir.empty()) {
    note = std::string("skipped (--data-dir/$") + kDataDirEnv + " not set)";
    return "";
  }
  if (!std::filesystem::exists(dataset_dir(c))) {
    note = "skipped (" + dataset_dir(c) + " not found)";
    return "";
  }
  for (const char* split : {"train", "test"}) {
    Dataset d = load_dataset(c.dataset, dataset_dir(c), split);
    const int64_t want = std::strcmp(split, "train") == 0 ? 60000 : 10000;
    if (d.size() != want)
      return std::string(split) + " split has " + std::to_string(d.size()) +
             " examples, expected " + std::to_string(want);
    for (double v : d.images->data)
      if (!(v >= 0.0 && v <= 1.0)) return "pixel outside [0,1]";
    for (int l : d.labels)
      if (l < 0 || l > 9) return "label outside 0..9";
  }
  note = "train 60000 / test 10000, pixels in [0,1], labels in 0..9";
  return "";
}

int cmd_verify(const RunConfig& c) {
  std::string kernel_names;
  for (const kern::Kernels* impl : kern::available()) {
    if (!kernel_names.empty()) kernel_names += ", ";
    kernel_names += impl->name;
  }
  std::string dataset_note;

  std::vector<Check> checks = {
      {"kernel equivalence (" + kernel_names + "; active " +
           kern::active().name + ")",
       check_kernels},
      {"rng determinism", check_rng},
      {"autodiff gradients vs finite differences", check_autodiff},
      {"structure preservation + negative control", check_structure_invariant},
      {"perturbation ball/box containment", check_containment},
      {"checkpoint round-trip", check_checkpoint_roundtrip},
      {"transformation file round-trip", check_spt_roundtrip},
      {"dataset " + c.dataset,
       [&]() { return check_datasets(c, dataset_note); }},
  };

  int failures = 0;
  for (auto& check : checks) {
    std::string err;
    try {
      err = check.run();
    } catch (const std::exception& e) {
      err = e.what();
    }
    const std::string note =
        (err.empty() && &check == &checks.back() && !dataset_note.empty())
            ? " — " + dataset_note
            : "";
    if (err.empty()) {
      std::printf("ok: %s%s\n", check.name.c_str(), note.c_str());
    } else {
      ++failures;
      std::printf("FAIL: %s — %s\n", check.name.c_str(), err.c_str());
    }
  }
  std::printf("%d/%zu checks passed\n", int(checks.size()) - failures,
              checks.size());
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spt-lab: structure-preserving gray-level transformation"
               " attacks, gradient-sign baselines, and adversarial-training"
               " defense on MNIST-class classifiers"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "read options from an INI file (CLI flags override it)");

  RunConfig raw;
  app.add_option("--dataset", raw.dataset, "dataset: mnist | fmnist")
      ->capture_default_str();
  app.add_option("--data-dir", raw.data_dir,
                 std::string("dataset root containing mnist/ and fmnist/ "
                             "(default: $") +
                     kDataDirEnv + ")");
  app.add_option("--subset", raw.subset,
                 "use only the first N examples of each split (0 = all)")
      ->capture_default_str();
  app.add_option("--seed", raw.seed, "experiment seed (training, attacks)")
      ->capture_default_str();
  app.add_option("--init-seed", raw.init_seed,
                 "transformation weight-initialization seed")
      ->capture_default_str();
  app.add_option("--init-scheme", raw.init_scheme,
                 "transformation weight-initialization scheme")
      ->capture_default_str();
  app.add_option("--alpha", raw.alpha,
                 "transformation weight penalty (negative = dataset default:"
                 " 0 mnist, 0.6 fmnist)")
      ->capture_default_str();
  app.add_option("--gammas", raw.gammas,
                 "comma-separated exponent ladder override")
      ->delimiter(',');
  app.add_option("--spt-lr", raw.spt_lr, "transformation fit learning rate")
      ->capture_default_str();
  app.add_option("--spt-epochs", raw.spt_epochs,
                 "transformation fit epochs")
      ->capture_default_str();
  app.add_option("--targeted-label", raw.targeted_label,
                 "fit the transformation toward this class (-1 = untargeted)")
      ->capture_default_str();
  app.add_option("--epsilon", raw.epsilon, "perturbation budget (fgsm/pgd)")
      ->capture_default_str();
  app.add_option("--step", raw.step, "pgd step size")->capture_default_str();
  app.add_option("--iters", raw.iters, "pgd iterations")
      ->capture_default_str();
  app.add_option("--jobs", raw.jobs, "parallel evaluation cells")
      ->capture_default_str();
  app.add_option("--out", raw.out, "output directory")->capture_default_str();

  std::vector<std::string> archs = {"C_p", "C_a0", "C_a1", "C_a2", "C_a3"};
  int train_epochs = 10;
  auto* train = app.add_subcommand(
      "train-classifiers", "train and checkpoint the classifier suite");
  train->add_option("--arch", archs, "architectures to train")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--epochs", train_epochs, "training epochs per model")
      ->capture_default_str();

  std::string attack_name, attack_target = "C_p";
  bool attack_defended = false;
  auto* attack = app.add_subcommand(
      "attack", "fit/run one attack against one checkpoint and print the"
                " damage");
  attack->add_option("attack", attack_name, "attack name: spt | fgsm | pgd")
      ->required();
  attack->add_option("--target", attack_target, "target architecture")
      ->capture_default_str();
  attack->add_flag("--defended", attack_defended,
                   "attack the adversarially trained checkpoint");

  std::string adv_arch = "C_p";
  int adv_epochs = 5;
  auto* adv = app.add_subcommand(
      "adv-train", "train one model on pgd adversarial examples");
  adv->add_option("--arch", adv_arch, "architecture to train")
      ->capture_default_str();
  adv->add_option("--epochs", adv_epochs, "adversarial training epochs")
      ->capture_default_str();

  std::string matrix_mode = "whitebox";
  bool train_missing = false;
  int matrix_epochs = 10;
  auto* matrix = app.add_subcommand(
      "matrix", "evaluate the classifier suite across attack columns");
  matrix->add_option("--mode", matrix_mode, "whitebox | blackbox")
      ->capture_default_str();
  matrix->add_flag("--train-missing", train_missing,
                   "train any missing checkpoint instead of failing");
  matrix->add_option("--epochs", matrix_epochs,
                     "epochs used by --train-missing")
      ->capture_default_str();

  std::string export_target = "C_p", export_attack = "spt";
  bool export_defended = false;
  int64_t export_count = 16;
  auto* export_cmd = app.add_subcommand(
      "export-examples", "write original/adversarial image pairs, a contact"
                         " sheet, and a manifest");
  export_cmd->add_option("--target", export_target, "target architecture")
      ->capture_default_str();
  export_cmd
      ->add_option("--attack", export_attack, "attack name: spt | fgsm | pgd")
      ->capture_default_str();
  export_cmd->add_flag("--defended", export_defended,
                       "use the adversarially trained checkpoint");
  export_cmd->add_option("--count", export_count, "number of example pairs")
      ->capture_default_str();

  auto* verify = app.add_subcommand(
      "verify", "run the invariant suite (kernels, rng, gradients, formats,"
                " data)");

  for (auto* sub : {train, attack, adv, matrix, export_cmd, verify})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig c = resolve(raw);
    if (verify->parsed()) return cmd_verify(c);

    RunLog log(c.out);
    log.line("start " + command);
    try {
      if (train->parsed()) {
        cmd_train_classifiers(c, archs, train_epochs);
      } else if (attack->parsed()) {
        cmd_attack(c, attack_name, attack_target, attack_defended);
      } else if (adv->parsed()) {
        cmd_adv_train(c, adv_arch, adv_epochs);
      } else if (matrix->parsed()) {
        cmd_matrix(c, matrix_mode, train_missing, matrix_epochs);
      } else if (export_cmd->parsed()) {
        cmd_export_examples(c, export_target, export_attack, export_defended,
                            export_count);
      }
    } catch (...) {
      log.line("end " + command + " status=error");
      throw;
    }
    log.line("end " + command + " status=ok");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
