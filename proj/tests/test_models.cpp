#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sptlab/adam.hpp"
#include "sptlab/error.hpp"
#include "sptlab/models.hpp"
#include "sptlab/ops.hpp"
#include "sptlab/rng.hpp"

using namespace sptlab;
namespace fs = std::filesystem;

namespace {

Dataset synthetic(int64_t n, uint64_t seed) {
  Dataset d;
  d.name = "synthetic";
  d.split = "train";
  d.images = Tensor::make({n, 1, 28, 28});
  Rng r(seed);
  for (auto& v : d.images->data) v = r.uniform();
  d.labels.resize(n);
  for (int64_t i = 0; i < n; ++i) d.labels[i] = int(i % 10);
  return d;
}

std::vector<std::string> param_names(const Model& m) {
  std::vector<std::string> out;
  for (const auto& [name, t] : m.named_params()) out.push_back(name);
  return out;
}

}  // namespace

TEST(Build, CpLayerSequenceAndShapes) {
  Model m = build(Arch::Cp, 1);
  EXPECT_EQ(param_names(m),
            (std::vector<std::string>{"conv1.w", "conv1.b", "conv2.w",
                                      "conv2.b", "fc1.w", "fc1.b", "fc2.w",
                                      "fc2.b"}));
  const auto named = m.named_params();
  EXPECT_EQ(named[0].second->shape, (std::vector<int64_t>{32, 1, 5, 5}));
  EXPECT_EQ(named[2].second->shape, (std::vector<int64_t>{64, 32, 5, 5}));
  EXPECT_EQ(named[4].second->shape, (std::vector<int64_t>{64 * 7 * 7, 1024}));
  EXPECT_EQ(named[6].second->shape, (std::vector<int64_t>{1024, 10}));
}

TEST(Build, Ca3LayerSequenceAndShapes) {
  Model m = build(Arch::Ca3, 1);
  EXPECT_EQ(param_names(m),
            (std::vector<std::string>{"conv1.w", "conv1.b", "fc1.w", "fc1.b",
                                      "fc2.w", "fc2.b", "fc3.w", "fc3.b"}));
  const auto named = m.named_params();
  EXPECT_EQ(named[0].second->shape, (std::vector<int64_t>{32, 1, 3, 3}));
  EXPECT_EQ(named[2].second->shape, (std::vector<int64_t>{32 * 14 * 14, 1024}));
  EXPECT_EQ(named[4].second->shape, (std::vector<int64_t>{1024, 512}));
  EXPECT_EQ(named[6].second->shape, (std::vector<int64_t>{512, 10}));
}

TEST(Build, ParameterCountsAreFrozen) {
  // counts follow from the layer tables and the 28x28x1 input contract
  EXPECT_EQ(build(Arch::Cp, 1).param_count(), 3274634);
  EXPECT_EQ(build(Arch::Ca0, 1).param_count(), 3274634);
  EXPECT_EQ(build(Arch::Ca1, 1).param_count(), 3272330);
  EXPECT_EQ(build(Arch::Ca2, 1).param_count(), 3250602);
  EXPECT_EQ(build(Arch::Ca3, 1).param_count(), 6953802);
}

TEST(Build, SameSeedBitIdentical) {
  Model a = build(Arch::Ca2, 77), b = build(Arch::Ca2, 77);
  const auto pa = a.params(), pb = b.params();
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->data, pb[i]->data);
}

TEST(Build, CpAndCa0ShareShapeButNotInit) {
  Model p = build(Arch::Cp, 42), a0 = build(Arch::Ca0, 42);
  const auto pp = p.params(), pa = a0.params();
  ASSERT_EQ(pp.size(), pa.size());
  bool differ = false;
  for (size_t i = 0; i < pp.size(); ++i) {
    EXPECT_EQ(pp[i]->shape, pa[i]->shape);
    if (pp[i]->data != pa[i]->data) differ = true;
  }
  EXPECT_TRUE(differ);
}

TEST(Build, UnknownNameRejected) {
  EXPECT_FALSE(arch_from("C_b9").has_value());
  EXPECT_EQ(arch_from("C_a1"), Arch::Ca1);
}

TEST(Forward, TenLogitsFromAllFive) {
  auto x = synthetic(3, 5).images;
  for (Arch a : kAllArchs) {
    Model m = build(a, 9);
    auto l = logits(m, x);
    EXPECT_EQ(l->shape, (std::vector<int64_t>{3, 10})) << arch_name(a);
  }
}

TEST(Forward, PredictRowsAreProbabilities) {
  Model m = build(Arch::Cp, 3);
  auto probs = predict(m, synthetic(4, 6).images);
  for (int64_t n = 0; n < 4; ++n) {
    double s = 0;
    for (int k = 0; k < 10; ++k) {
      const double v = probs->data[n * 10 + k];
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Forward, PredictIsPure) {
  Model m = build(Arch::Ca1, 4);
  auto x = synthetic(2, 7).images;
  auto a = predict(m, x), b = predict(m, x);
  EXPECT_EQ(a->data, b->data);
}

TEST(Forward, WrongSpatialShapeRejected) {
  Model m = build(Arch::Cp, 3);
  EXPECT_THROW(logits(m, Tensor::make({1, 1, 27, 27})), dimension_error);
  EXPECT_THROW(logits(m, Tensor::make({1, 3, 28, 28})), dimension_error);
}

TEST(Train, TwentyStepsOnAFixedBatchCutLossSharply) {
  // One fixed 64-sample batch, 20 Adam steps at lr 1e-3, every architecture.
  // Per-step monotonicity does NOT hold here: with sigma-0.1 init the logit
  // scale is large and the first few bias-corrected Adam steps overshoot
  // (measured on MNIST batches as well), so the asserted form is the net
  // effect of the window — the loss must land well below its start.
  Dataset d = synthetic(64, 11);
  auto y = onehot(d.labels);
  for (Arch a : kAllArchs) {
    Model m = build(a, 21);
    m.set_requires_grad(true);
    auto params = m.params();
    std::vector<AdamState> opt;
    for (const auto& p : params) opt.emplace_back(p->data.size(), 1e-3);

    double first = 0, last = 0;
    for (int step = 0; step <= 20; ++step) {
      for (const auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
      }
      auto loss = ops::softmax_cross_entropy(logits(m, d.images), y);
      last = loss->data[0];
      if (step == 0) first = last;
      if (step == 20) break;
      backward(loss);
      for (size_t j = 0; j < params.size(); ++j)
        opt[j].step(params[j]->data.data(), params[j]->grad.data(),
                    params[j]->data.size());
    }
    m.set_requires_grad(false);
    EXPECT_LT(last, 0.75 * first) << arch_name(a);
  }
}

TEST(Train, ZeroEpochsIsNoOp) {
  Dataset d = synthetic(32, 12);
  Model m = build(Arch::Ca2, 5);
  const auto before = m.params()[0]->data;
  train_classifier(m, d, 0, 16, 99);
  EXPECT_EQ(m.params()[0]->data, before);
  EXPECT_EQ(m.epochs_trained, 0);
}

TEST(Train, EmptyDatasetRejected) {
  Dataset d;
  Model m = build(Arch::Cp, 5);
  EXPECT_THROW(train_classifier(m, d, 1, 16, 0), usage_error);
}

TEST(Train, DeterministicGivenSeed) {
  Dataset d = synthetic(96, 13);
  Model a = build(Arch::Ca2, 7), b = build(Arch::Ca2, 7);
  train_classifier(a, d, 1, 32, 1234);
  train_classifier(b, d, 1, 32, 1234);
  const auto pa = a.params(), pb = b.params();
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->data, pb[i]->data);
}

TEST(Train, ParamsFrozenOutsideTraining) {
  Model m = build(Arch::Cp, 5);
  for (const auto& p : m.params()) EXPECT_FALSE(p->requires_grad);
  train_classifier(m, synthetic(32, 14), 1, 16, 0);
  for (const auto& p : m.params()) EXPECT_FALSE(p->requires_grad);
}

TEST(Train, SubsetReachesHighTrainAccuracy) {
  const char* dir = std::getenv("SPTLAB_DATA_DIR");
  if (!dir) GTEST_SKIP() << "SPTLAB_DATA_DIR not set";
  Dataset d = load_dataset("mnist", std::string(dir) + "/mnist", "train", 512);
  Model m = build(Arch::Cp, 31);
  train_classifier(m, d, 5, 64, 77);
  auto got = predict_labels(m, d.images);
  int64_t hit = 0;
  for (int64_t i = 0; i < d.size(); ++i) hit += got[i] == d.labels[i];
  EXPECT_GT(double(hit) / double(d.size()), 0.9);
}

TEST(Checkpoint, RoundTripPredictionsExact) {
  Model m = build(Arch::Ca1, 15);
  const auto path = (fs::temp_directory_path() / "ckpt_rt.bin").string();
  m.test_accuracy = 0.5;
  m.epochs_trained = 3;
  save_checkpoint(m, path);
  Model r = load_checkpoint(path);
  EXPECT_EQ(r.arch, Arch::Ca1);
  EXPECT_EQ(r.seed, m.seed);
  EXPECT_EQ(r.epochs_trained, 3);
  EXPECT_EQ(r.test_accuracy, 0.5);
  auto x = synthetic(3, 16).images;
  EXPECT_EQ(predict(m, x)->data, predict(r, x)->data);
  const auto pm = m.params(), pr = r.params();
  for (size_t i = 0; i < pm.size(); ++i) EXPECT_EQ(pm[i]->data, pr[i]->data);
  fs::remove(path);
}

TEST(Checkpoint, CorruptedMagicRejected) {
  Model m = build(Arch::Cp, 17);
  const auto path = (fs::temp_directory_path() / "ckpt_mag.bin").string();
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  EXPECT_THROW(load_checkpoint(path), format_error);
  fs::remove(path);
}

TEST(Checkpoint, BitFlipFailsChecksum) {
  Model m = build(Arch::Cp, 18);
  const auto path = (fs::temp_directory_path() / "ckpt_crc.bin").string();
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(int64_t(fs::file_size(path)) / 2);
    int c = f.peek();
    f.put(char(c ^ 0x40));
  }
  EXPECT_THROW(load_checkpoint(path), format_error);
  fs::remove(path);
}

TEST(Checkpoint, TruncationRejected) {
  Model m = build(Arch::Ca3, 19);
  const auto path = (fs::temp_directory_path() / "ckpt_tr.bin").string();
  save_checkpoint(m, path);
  fs::resize_file(path, fs::file_size(path) - 100);
  EXPECT_THROW(load_checkpoint(path), format_error);
  fs::remove(path);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/model.bin"), io_error);
}
