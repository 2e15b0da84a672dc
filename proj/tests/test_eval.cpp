#include "sptlab/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sptlab/attacks.hpp"
#include "sptlab/error.hpp"
#include "sptlab/rng.hpp"

using namespace sptlab;

namespace {

Dataset grid_synthetic(int64_t n, uint64_t seed, const char* split = "train") {
  Dataset d;
  d.name = "synthetic";
  d.split = split;
  d.images = Tensor::make({n, 1, 28, 28});
  Rng r(seed);
  for (auto& v : d.images->data) v = double(r.below(256)) / 255.0;
  d.labels.resize(size_t(n));
  for (int64_t i = 0; i < n; ++i) d.labels[size_t(i)] = int(i % 10);
  return d;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  EXPECT_TRUE(bool(is)) << path;
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

std::string fresh_dir(const char* name) {
  std::string dir = testing::TempDir() + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Stats, CountsModalClassAndFraction) {
  PredictionStats s = prediction_stats({3, 3, 3, 3, 7, 1, 3});
  EXPECT_EQ(s.total, 7);
  EXPECT_EQ(s.counts[3], 5);
  EXPECT_EQ(s.counts[7], 1);
  EXPECT_EQ(s.modal_class, 3);
  EXPECT_NEAR(s.modal_fraction, 5.0 / 7.0, 1e-15);
  EXPECT_THROW(prediction_stats({0, 10}), usage_error);
  EXPECT_EQ(prediction_stats({}).modal_class, -1);
}

TEST(Stats, AccuracyAgreesWithPredictLabels) {
  Model m = build(Arch::Cp, 3);
  Dataset d = grid_synthetic(32, 4);
  auto preds = predict_labels(m, d.images);
  int64_t ok = 0;
  for (size_t i = 0; i < preds.size(); ++i) ok += preds[i] == d.labels[i];
  EXPECT_DOUBLE_EQ(accuracy(m, d.images, d.labels),
                   double(ok) / double(preds.size()));
  std::vector<int> short_labels(3, 0);
  EXPECT_THROW(accuracy(m, d.images, short_labels), usage_error);
}

TEST(Structure, PixelwiseMapPreservesPerturbationBreaks) {
  Dataset d = grid_synthetic(4, 5);
  SptParams p = SptParams::init(0.0, 8);
  auto mapped = transform(p, d.images);
  StructureReport ok = check_structure(d.images, mapped);
  EXPECT_EQ(ok.images, 4);
  EXPECT_EQ(ok.violations, 0);
  EXPECT_TRUE(ok.preserved());
  EXPECT_GT(ok.value_groups, 0);

  // nudging one pixel of a duplicated value must register
  auto broken = Tensor::from(mapped->shape, mapped->data);
  int64_t victim = -1;
  for (int64_t j = 1; j < 784 && victim < 0; ++j)
    for (int64_t k = 0; k < j && victim < 0; ++k)
      if (d.images->data[j] == d.images->data[k]) victim = j;
  ASSERT_GE(victim, 0);
  broken->data[victim] += 1e-9;
  StructureReport bad = check_structure(d.images, broken);
  EXPECT_EQ(bad.violations, 1);
  EXPECT_FALSE(bad.preserved());

  EXPECT_THROW(check_structure(d.images, Tensor::make({2, 1, 28, 28})),
               usage_error);
}

TEST(Structure, FgsmIsTheNegativeControl) {
  Model m = build(Arch::Cp, 6);
  Dataset d = grid_synthetic(8, 7);
  auto adv = fgsm(m, d.images, d.labels, 0.3);
  EXPECT_GT(check_structure(d.images, adv).violations, 0);
}

TEST(Digest, StableAndSensitive) {
  EXPECT_EQ(digest_hex(""), "cbf29ce484222325");  // FNV-1a offset basis
  EXPECT_EQ(digest_hex("cell|v1|a").size(), 16u);
  EXPECT_NE(digest_hex("cell|v1|a"), digest_hex("cell|v1|b"));
}

TEST(Cells, RoundTripAndDamage) {
  const std::string dir = fresh_dir("cells_rt");
  CellResult c;
  c.dataset = "mnist";
  c.defense = "pgd_adv_train(eps=0.3,step=0.01,iters=7)";
  c.attack = "spt";
  c.target = "C_p";
  c.note = "white-box";
  c.model_seed = 11;
  c.model_epochs = 4;
  c.attack_seed = 7;
  c.accuracy = 1.0 / 3.0;
  for (size_t i = 0; i < 10; ++i) c.histogram[i] = int64_t(i * i);
  c.digest = digest_hex("some key");

  save_cell(dir, c);
  auto back = load_cell(dir, c.digest);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->dataset, c.dataset);
  EXPECT_EQ(back->defense, c.defense);
  EXPECT_EQ(back->attack, c.attack);
  EXPECT_EQ(back->target, c.target);
  EXPECT_EQ(back->note, c.note);
  EXPECT_EQ(back->model_seed, c.model_seed);
  EXPECT_EQ(back->model_epochs, c.model_epochs);
  EXPECT_EQ(back->attack_seed, c.attack_seed);
  EXPECT_EQ(back->accuracy, c.accuracy);
  EXPECT_EQ(back->histogram, c.histogram);

  EXPECT_FALSE(load_cell(dir, digest_hex("absent")).has_value());

  // a cell stored under the wrong name must refuse to load
  std::filesystem::copy_file(dir + "/" + c.digest + ".cell",
                             dir + "/" + digest_hex("other") + ".cell");
  EXPECT_THROW(load_cell(dir, digest_hex("other")), format_error);
}

TEST(Matrix, WhiteboxShapeAndDeterministicReports) {
  std::vector<Model> targets;
  targets.push_back(build(Arch::Cp, 21));
  targets.push_back(build(Arch::Ca3, 22));
  Dataset train = grid_synthetic(96, 31);
  Dataset test = grid_synthetic(64, 32, "test");

  MatrixJob job;
  job.train = &train;
  job.test = &test;
  job.alpha = 0.0;
  job.spt_seed = 5;
  job.spt.batch = 32;
  job.pert.iters = 3;

  EvalReport rep = run_whitebox_matrix(targets, job);
  ASSERT_EQ(rep.cells.size(), 8u);  // two targets x {none,fgsm,pgd,spt}
  const char* order[4] = {"none", "fgsm", "pgd", "spt"};
  for (size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(rep.cells[i].attack, order[i % 4]);
    EXPECT_EQ(rep.cells[i].target, i < 4 ? "C_p" : "C_a3");
  }
  for (const auto& c : rep.cells) {
    EXPECT_GE(c.accuracy, 0.0);
    EXPECT_LE(c.accuracy, 1.0);
    int64_t mass = 0;
    for (int64_t h : c.histogram) mass += h;
    EXPECT_EQ(mass, test.size());
    EXPECT_EQ(c.digest.size(), 16u);
  }

  // a rerun — even spread across worker threads — reproduces the report byte
  // for byte
  const std::string p1 = testing::TempDir() + "rep1.txt";
  const std::string p2 = testing::TempDir() + "rep2.txt";
  write_report(rep, p1);
  MatrixJob wide = job;
  wide.jobs = 3;
  write_report(run_whitebox_matrix(targets, wide), p2);
  EXPECT_EQ(read_file(p1), read_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST(Matrix, CellsAreCachedAndReused) {
  std::vector<Model> targets;
  targets.push_back(build(Arch::Cp, 21));
  Dataset train = grid_synthetic(64, 41);
  Dataset test = grid_synthetic(32, 42, "test");

  MatrixJob job;
  job.train = &train;
  job.test = &test;
  job.spt_seed = 9;
  job.spt.batch = 32;
  job.pert.iters = 2;
  job.cells_dir = fresh_dir("cells_cache");

  EvalReport first = run_whitebox_matrix(targets, job);
  ASSERT_EQ(first.cells.size(), 4u);

  // plant a sentinel result under the spt cell's digest: a rerun must pick
  // it up instead of recomputing
  CellResult planted = first.cells[3];
  planted.accuracy = 0.123456;
  save_cell(job.cells_dir, planted);
  EvalReport second = run_whitebox_matrix(targets, job);
  EXPECT_EQ(second.cells[3].accuracy, 0.123456);
  EXPECT_EQ(second.cells[0].accuracy, first.cells[0].accuracy);
  EXPECT_EQ(second.cells[2].accuracy, first.cells[2].accuracy);

  // a model trained further must not collide with the cached cells
  Model longer = targets[0];
  longer.epochs_trained += 1;
  EvalReport third = run_whitebox_matrix({longer}, job);
  EXPECT_NE(third.cells[3].digest, second.cells[3].digest);
  EXPECT_NE(third.cells[3].accuracy, 0.123456);
}

TEST(Matrix, StoresAndReusesFittedTransformations) {
  std::vector<Model> targets;
  targets.push_back(build(Arch::Cp, 21));
  Dataset train = grid_synthetic(64, 61);
  Dataset test = grid_synthetic(32, 62, "test");

  MatrixJob job;
  job.train = &train;
  job.test = &test;
  job.alpha = 0.25;
  job.spt_seed = 7;
  job.spt.batch = 32;
  job.pert.iters = 2;
  job.spt_dir = fresh_dir("spt_store");

  run_whitebox_matrix(targets, job);
  const std::string path =
      spt_param_path(job.spt_dir, "synthetic", "C_p", false, 7, 0.25);
  ASSERT_TRUE(std::filesystem::exists(path));
  SptParams stored = load_spt(path);
  ASSERT_EQ(stored.weights.size(), 11u);

  // plant all-zero weights under the canonical name: the rerun must trust
  // the store instead of refitting, collapsing every image to flat gray
  for (auto& w : stored.weights) w = 0.0;
  save_spt(stored, path);
  EvalReport second = run_whitebox_matrix(targets, job);
  const auto& hist = second.cells[3].histogram;
  EXPECT_EQ(*std::max_element(hist.begin(), hist.end()), test.size());
}

TEST(Matrix, BlackboxUsesTheSubstituteTransformation) {
  std::vector<Model> targets;
  targets.push_back(build(Arch::Cp, 21));
  targets.push_back(build(Arch::Ca1, 23));
  Dataset train = grid_synthetic(96, 51);
  Dataset test = grid_synthetic(48, 52, "test");

  MatrixJob job;
  job.train = &train;
  job.test = &test;
  job.spt_seed = 3;
  job.spt.batch = 32;

  EvalReport rep = run_blackbox_matrix(targets, job);
  ASSERT_EQ(rep.cells.size(), 2u);
  EXPECT_EQ(rep.cells[0].attack, "spt");
  EXPECT_EQ(rep.cells[0].note, "white-box-reference");
  EXPECT_EQ(rep.cells[1].attack, "spt_transfer");
  EXPECT_EQ(rep.cells[1].note, "substitute=C_p");
  EXPECT_EQ(rep.cells[1].target, "C_a1");

  // the transfer cell must equal a hand-rolled evaluation of C_a1 on the
  // substitute-fitted transformation
  SptParams p = SptParams::init(0.0, 3);
  SptTrainConfig cfg;
  cfg.batch = 32;
  train_spt(p, targets[0], train, cfg);
  EXPECT_DOUBLE_EQ(rep.cells[1].accuracy,
                   accuracy(targets[1], transform(p, test.images), test.labels));
}

TEST(Matrix, RejectsBadJobs) {
  MatrixJob job;
  std::vector<Model> none;
  EXPECT_THROW(run_whitebox_matrix(none, job), usage_error);
  std::vector<Model> one;
  one.push_back(build(Arch::Cp, 1));
  EXPECT_THROW(run_whitebox_matrix(one, job), usage_error);
}

TEST(Pgm, RoundTripWithinQuantizationStep) {
  auto img = Tensor::make({1, 1, 28, 28});
  Rng r(60);
  for (auto& v : img->data) v = r.uniform();
  const std::string path = testing::TempDir() + "probe.pgm";
  write_pgm(path, img->data.data(), 28, 28);

  const std::string raw = read_file(path);
  EXPECT_EQ(raw.substr(0, 13), "P5\n28 28\n255\n");
  EXPECT_EQ(raw.size(), 13u + 784u);

  auto back = read_pgm(path);
  ASSERT_EQ(back->shape, (std::vector<int64_t>{1, 1, 28, 28}));
  for (int64_t i = 0; i < 784; ++i)
    EXPECT_LE(std::fabs(back->data[i] - img->data[i]), 0.5 / 255.0 + 1e-12);
  std::remove(path.c_str());
}

TEST(Pgm, GridValuesRoundTripExactly) {
  // loader-produced values sit on the k/255 grid and survive unchanged
  auto img = Tensor::make({1, 1, 4, 4});
  for (int64_t i = 0; i < 16; ++i) img->data[i] = double(i * 17) / 255.0;
  const std::string path = testing::TempDir() + "grid.pgm";
  write_pgm(path, img->data.data(), 4, 4);
  auto back = read_pgm(path);
  for (int64_t i = 0; i < 16; ++i) EXPECT_EQ(back->data[i], img->data[i]);
  std::remove(path.c_str());
}

TEST(Export, WritesPairsSheetAndManifest) {
  Dataset d = grid_synthetic(6, 70);
  SptParams p = SptParams::init(0.0, 4);
  auto adv = transform(p, d.images);
  Model m = build(Arch::Cp, 2);
  auto preds_clean = predict_labels(m, d.images);
  auto preds_adv = predict_labels(m, adv);

  const std::string dir = fresh_dir("export_probe");
  export_examples(dir, "mnist", d.images, adv, d.labels, preds_clean,
                  preds_adv, 5);

  for (int i = 0; i < 5; ++i) {
    auto orig = read_pgm(dir + "/mnist-" + std::to_string(i) + "-orig.pgm");
    for (int64_t j = 0; j < 784; ++j)
      ASSERT_LE(std::fabs(orig->data[j] - d.images->data[i * 784 + j]),
                0.5 / 255.0 + 1e-12);
  }
  auto sheet = read_pgm(dir + "/mnist-grid.pgm");
  EXPECT_EQ(sheet->shape[2], 56);       // two rows of 28
  EXPECT_EQ(sheet->shape[3], 5 * 28);   // five columns

  const std::string manifest = read_file(dir + "/mnist-manifest.txt");
  EXPECT_NE(manifest.find("example 4 label="), std::string::npos);
  EXPECT_NE(manifest.find("orig=mnist-4-orig.pgm"), std::string::npos);

  EXPECT_THROW(export_examples(dir, "x", d.images, adv, d.labels, preds_clean,
                               preds_adv, 0),
               usage_error);
}
