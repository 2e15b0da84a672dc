#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sptlab/tensor.hpp"

namespace sptlab {

// Labeled image collection in [0,1] gray-level space. Immutable after load.
struct Dataset {
  std::string name;   // mnist | fmnist
  std::string split;  // train | test
  TensorPtr images;   // [N,1,H,W], values in [0,1]
  std::vector<int> labels;

  int64_t size() const { return images ? images->shape[0] : 0; }
  Dataset subset(int64_t k) const;  // first k examples
};

// IDX pair loader; accepts raw or gzip files (sniffed by magic bytes).
// Pixels are scaled by 1/255; file order is preserved.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Resolves <data_dir>/<prefix>-{images-idx3,labels-idx1}-ubyte[.gz] where
// prefix is "train" or "t10k", then loads it. subset 0 means all.
Dataset load_dataset(const std::string& name, const std::string& data_dir,
                     const std::string& split, int64_t subset = 0);

struct Batch {
  TensorPtr images;        // [B,1,H,W]
  TensorPtr onehot;        // [B,10]
  std::vector<int> labels;
};

// Deterministic batch plan over a dataset: a seeded permutation (or file
// order without a seed) cut into batch_size chunks, final short chunk kept.
class Batches {
 public:
  Batches(const Dataset& data, int64_t batch_size, std::optional<uint64_t> seed);
  int64_t count() const { return int64_t(plan_.size()); }
  Batch get(int64_t i) const;  // materializes batch i
  const std::vector<int64_t>& indices(int64_t i) const { return plan_[i]; }

 private:
  const Dataset& data_;
  std::vector<std::vector<int64_t>> plan_;
};

TensorPtr onehot(const std::vector<int>& labels, int64_t classes = 10);

}  // namespace sptlab
