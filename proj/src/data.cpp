#include "sptlab/data.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "sptlab/error.hpp"
#include "sptlab/rng.hpp"

namespace sptlab {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in,
                                  const std::string& path) {
  std::vector<unsigned char> out;
  out.reserve(in.size() * 4);
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK)
    throw io_error("zlib init failed for " + path);
  zs.next_in = const_cast<unsigned char*>(in.data());
  zs.avail_in = uInt(in.size());
  unsigned char buf[1 << 16];
  int rc;
  do {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw format_error("corrupt gzip stream in " + path);
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

// raw bytes of an IDX file, transparently gunzipped
std::vector<unsigned char> read_idx_bytes(const std::string& path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b)
    return gunzip(bytes, path);
  return bytes;
}

uint32_t be32(const unsigned char* p) {
  return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 |
         uint32_t(p[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_idx_bytes(images_path);
  if (img.size() < 16 || be32(img.data()) != 0x00000803)
    throw format_error(images_path + ": not an IDX image file (magic)");
  const int64_t n = be32(img.data() + 4);
  const int64_t h = be32(img.data() + 8);
  const int64_t w = be32(img.data() + 12);
  if (int64_t(img.size()) != 16 + n * h * w)
    throw format_error(images_path + ": truncated image payload");

  const auto lab = read_idx_bytes(labels_path);
  if (lab.size() < 8 || be32(lab.data()) != 0x00000801)
    throw format_error(labels_path + ": not an IDX label file (magic)");
  const int64_t nl = be32(lab.data() + 4);
  if (nl != n)
    throw format_error(labels_path + ": label count does not match images");
  if (int64_t(lab.size()) != 8 + nl)
    throw format_error(labels_path + ": truncated label payload");

  Dataset d;
  d.images = Tensor::make({n, 1, h, w});
  for (int64_t i = 0; i < n * h * w; ++i)
    d.images->data[i] = double(img[16 + i]) / 255.0;
  d.labels.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    const int v = lab[8 + i];
    if (v > 9)
      throw validation_error(labels_path + ": label value out of range 0..9");
    d.labels[i] = v;
  }
  return d;
}

Dataset load_dataset(const std::string& name, const std::string& data_dir,
                     const std::string& split, int64_t subset) {
  if (name != "mnist" && name != "fmnist")
    throw usage_error("unknown dataset '" + name + "' (mnist|fmnist)");
  if (split != "train" && split != "test")
    throw usage_error("unknown split '" + split + "' (train|test)");
  const std::string prefix = split == "train" ? "train" : "t10k";

  auto resolve = [&](const std::string& stem) {
    namespace fs = std::filesystem;
    const std::string base = data_dir + "/" + stem;
    if (fs::exists(base)) return base;
    if (fs::exists(base + ".gz")) return base + ".gz";
    throw io_error("missing dataset file " + base + "[.gz]");
  };

  Dataset d = load_idx(resolve(prefix + "-images-idx3-ubyte"),
                       resolve(prefix + "-labels-idx1-ubyte"));
  d.name = name;
  d.split = split;
  if (subset > 0 && subset < d.size()) d = d.subset(subset);
  return d;
}

Dataset Dataset::subset(int64_t k) const {
  if (k <= 0 || k > size()) throw usage_error("subset size out of range");
  Dataset d;
  d.name = name;
  d.split = split;
  const int64_t px = images->size() / size();
  d.images = Tensor::make({k, images->shape[1], images->shape[2], images->shape[3]});
  std::copy_n(images->data.begin(), k * px, d.images->data.begin());
  d.labels.assign(labels.begin(), labels.begin() + k);
  return d;
}

TensorPtr onehot(const std::vector<int>& labels, int64_t classes) {
  auto t = Tensor::make({int64_t(labels.size()), classes});
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw validation_error("label outside 0..classes-1");
    t->data[i * classes + labels[i]] = 1.0;
  }
  return t;
}

Batches::Batches(const Dataset& data, int64_t batch_size,
                 std::optional<uint64_t> seed)
    : data_(data) {
  if (batch_size < 1) throw usage_error("batch_size must be >= 1");
  const int64_t n = data.size();
  std::vector<int64_t> order(n);
  if (seed) {
    order = Rng(*seed).permutation(n);
  } else {
    for (int64_t i = 0; i < n; ++i) order[i] = i;
  }
  for (int64_t at = 0; at < n; at += batch_size) {
    const int64_t take = std::min(batch_size, n - at);
    plan_.emplace_back(order.begin() + at, order.begin() + at + take);
  }
}

Batch Batches::get(int64_t i) const {
  const auto& idx = plan_.at(i);
  const int64_t b = int64_t(idx.size());
  const int64_t px = data_.images->size() / data_.size();
  Batch out;
  out.images = Tensor::make({b, data_.images->shape[1], data_.images->shape[2],
                             data_.images->shape[3]});
  out.labels.resize(b);
  for (int64_t j = 0; j < b; ++j) {
    std::copy_n(data_.images->data.begin() + idx[j] * px, px,
                out.images->data.begin() + j * px);
    out.labels[j] = data_.labels[idx[j]];
  }
  out.onehot = onehot(out.labels);
  return out;
}

}  // namespace sptlab
