#include "sptlab/models.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "sptlab/adam.hpp"
#include "sptlab/error.hpp"
#include "sptlab/ops.hpp"
#include "sptlab/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace sptlab {

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::Cp: return "C_p";
    case Arch::Ca0: return "C_a0";
    case Arch::Ca1: return "C_a1";
    case Arch::Ca2: return "C_a2";
    case Arch::Ca3: return "C_a3";
  }
  return "?";
}

std::optional<Arch> arch_from(std::string_view name) {
  for (Arch a : kAllArchs)
    if (name == arch_name(a)) return a;
  return std::nullopt;
}

namespace {

struct ConvSpec { int maps, k; };

// Layer tables behind build(); ReLU follows every conv, every pool is 2x2,
// convs are stride-1 SAME, and each FC except the last is ReLU-activated.
struct ArchTable {
  std::vector<ConvSpec> convs;    // each conv followed by relu
  std::vector<int> pool_after;    // conv indices (0-based) followed by a pool
  std::vector<int> fcs;           // hidden + final widths, last is 10
};

ArchTable table_for(Arch a) {
  switch (a) {
    case Arch::Cp:
    case Arch::Ca0: return {{{32, 5}, {64, 5}}, {0, 1}, {1024, 10}};
    case Arch::Ca1: return {{{32, 4}, {32, 4}, {64, 4}}, {0, 1}, {1024, 10}};
    case Arch::Ca2: return {{{32, 3}, {32, 3}, {64, 3}}, {0, 1}, {1024, 10}};
    case Arch::Ca3: return {{{32, 3}}, {0}, {1024, 512, 10}};
  }
  throw usage_error("unknown architecture id");
}

void init_tensor(const TensorPtr& t, uint64_t seed, const std::string& tag,
                 bool bias) {
  if (bias) {
    std::fill(t->data.begin(), t->data.end(), 0.1);
  } else {
    Rng r(Rng::derive(seed, tag));
    for (auto& v : t->data) v = r.truncated_normal(0.1);
  }
}

// Toggles requires_grad on a model's parameters for the enclosing scope.
struct GradGuard {
  const Model& m;
  explicit GradGuard(const Model& model) : m(model) { m.set_requires_grad(true); }
  ~GradGuard() { m.set_requires_grad(false); }
};

}  // namespace

Model build(Arch arch, uint64_t seed) {
  Model m;
  m.arch = arch;
  m.seed = seed;
  const uint64_t s = Rng::derive(seed, arch_name(arch));
  const ArchTable tab = table_for(arch);

  int64_t C = 1, H = 28, W = 28;
  for (size_t i = 0; i < tab.convs.size(); ++i) {
    const auto [maps, k] = tab.convs[i];
    Layer conv{Layer::conv, "conv" + std::to_string(i + 1), nullptr, nullptr, 0, 1};
    conv.w = Tensor::make({maps, C, k, k});
    conv.b = Tensor::make({maps});
    init_tensor(conv.w, s, conv.name + ".w", false);
    init_tensor(conv.b, s, conv.name + ".b", true);
    m.layers.push_back(std::move(conv));
    m.layers.push_back({Layer::relu, "", nullptr, nullptr, 0, 0});
    C = maps;  // SAME padding, stride 1: H and W unchanged
    if (std::find(tab.pool_after.begin(), tab.pool_after.end(), int(i)) !=
        tab.pool_after.end()) {
      m.layers.push_back({Layer::pool, "", nullptr, nullptr, 2, 2});
      H = (H + 1) / 2;
      W = (W + 1) / 2;
    }
  }

  int64_t D = C * H * W;
  for (size_t i = 0; i < tab.fcs.size(); ++i) {
    Layer fc{Layer::fc, "fc" + std::to_string(i + 1), nullptr, nullptr, 0, 0};
    fc.w = Tensor::make({D, tab.fcs[i]});
    fc.b = Tensor::make({int64_t(tab.fcs[i])});
    init_tensor(fc.w, s, fc.name + ".w", false);
    init_tensor(fc.b, s, fc.name + ".b", true);
    m.layers.push_back(std::move(fc));
    if (i + 1 < tab.fcs.size())
      m.layers.push_back({Layer::relu, "", nullptr, nullptr, 0, 0});
    D = tab.fcs[i];
  }
  return m;
}

std::vector<std::pair<std::string, TensorPtr>> Model::named_params() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  for (const auto& l : layers) {
    if (!l.w) continue;
    out.emplace_back(l.name + ".w", l.w);
    out.emplace_back(l.name + ".b", l.b);
  }
  return out;
}

std::vector<TensorPtr> Model::params() const {
  std::vector<TensorPtr> out;
  for (const auto& l : layers)
    if (l.w) {
      out.push_back(l.w);
      out.push_back(l.b);
    }
  return out;
}

int64_t Model::param_count() const {
  int64_t n = 0;
  for (const auto& p : params()) n += p->size();
  return n;
}

void Model::set_requires_grad(bool rg) const {
  for (const auto& p : params()) p->requires_grad = rg;
}

TensorPtr logits(const Model& m, const TensorPtr& images) {
  if (images->shape.size() != 4 || images->shape[1] != 1 ||
      images->shape[2] != 28 || images->shape[3] != 28)
    throw dimension_error("expected images of shape [N,1,28,28]");
  TensorPtr t = images;
  for (const auto& l : m.layers) {
    switch (l.kind) {
      case Layer::conv:
        t = ops::conv2d(t, l.w, l.b, l.stride, ops::Padding::same);
        break;
      case Layer::pool:
        t = ops::maxpool2d(t, l.window, l.stride);
        break;
      case Layer::relu:
        t = ops::relu(t);
        break;
      case Layer::fc:
        if (t->shape.size() != 2)
          t = ops::reshape(t, {t->shape[0], t->size() / t->shape[0]});
        t = ops::affine(t, l.w, l.b);
        break;
    }
  }
  return t;
}

TensorPtr predict(const Model& m, const TensorPtr& images) {
  const int64_t n = images->shape[0];
  auto probs = Tensor::make({n, 10});
  const int64_t chunk = 250;
  const int64_t px = images->size() / n;
  for (int64_t at = 0; at < n; at += chunk) {
    const int64_t take = std::min(chunk, n - at);
    auto part = Tensor::make({take, images->shape[1], images->shape[2],
                              images->shape[3]});
    std::copy_n(images->data.begin() + at * px, take * px, part->data.begin());
    auto l = logits(m, part);
    ops::softmax_rows(l->data.data(), probs->data.data() + at * 10, take, 10);
  }
  return probs;
}

std::vector<int> predict_labels(const Model& m, const TensorPtr& images) {
  auto probs = predict(m, images);
  const int64_t n = probs->shape[0];
  std::vector<int> out(n);
  for (int64_t i = 0; i < n; ++i) {
    const double* row = probs->data.data() + i * 10;
    out[i] = int(std::max_element(row, row + 10) - row);
  }
  return out;
}

void train_classifier(Model& m, const Dataset& train, int epochs,
                      int64_t batch_size, uint64_t seed, double lr) {
  if (train.size() == 0) throw usage_error("train_classifier: empty dataset");
  if (epochs < 0) throw usage_error("train_classifier: negative epochs");
  if (epochs == 0) return;

  GradGuard guard(m);
  auto params = m.params();
  std::vector<AdamState> opt;
  opt.reserve(params.size());
  for (const auto& p : params) opt.emplace_back(p->data.size(), lr);

  for (int e = 0; e < epochs; ++e) {
    Batches bs(train, batch_size,
               Rng::derive(seed, "epoch:" + std::to_string(e)));
    for (int64_t i = 0; i < bs.count(); ++i) {
      Batch b = bs.get(i);
      for (const auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
      }
      backward(ops::softmax_cross_entropy(logits(m, b.images), b.onehot));
      for (size_t j = 0; j < params.size(); ++j)
        opt[j].step(params[j]->data.data(), params[j]->grad.data(),
                    params[j]->data.size());
    }
  }
  m.epochs_trained += epochs;
}

namespace {

struct ByteSink {
  std::vector<unsigned char> bytes;
  void raw(const void* p, size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
  template <typename T>
  void put(T v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    put(uint32_t(s.size()));
    raw(s.data(), s.size());
  }
};

struct ByteSource {
  const std::vector<unsigned char>& bytes;
  const std::string& path;
  size_t at = 0;
  void raw(void* p, size_t n) {
    if (at + n > bytes.size())
      throw format_error(path + ": truncated checkpoint");
    std::memcpy(p, bytes.data() + at, n);
    at += n;
  }
  template <typename T>
  T get() { T v; raw(&v, sizeof v); return v; }
  std::string str() {
    const uint32_t n = get<uint32_t>();
    if (n > (1u << 20)) throw format_error(path + ": absurd string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
};

constexpr char kMagic[8] = {'S', 'P', 'T', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  ByteSink s;
  s.put(kVersion);
  s.str(arch_name(m.arch));
  s.put(m.seed);
  s.put(int32_t(m.epochs_trained));
  s.put(m.test_accuracy);
  s.str(m.defense);
  const auto named = m.named_params();
  s.put(uint32_t(named.size()));
  for (const auto& [name, t] : named) {
    s.str(name);
    s.put(uint32_t(t->shape.size()));
    for (int64_t d : t->shape) s.put(int64_t(d));
    s.raw(t->data.data(), t->data.size() * sizeof(double));
  }
  const auto crc =
      uint32_t(crc32(0, s.bytes.data(), uInt(s.bytes.size())));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot write " + path);
    f.write(kMagic, sizeof kMagic);
    f.write(reinterpret_cast<const char*>(s.bytes.data()), s.bytes.size());
    f.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    if (!f) throw io_error("short write to " + path);
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open checkpoint " + path);
  std::vector<unsigned char> all((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (all.size() < sizeof kMagic + sizeof(uint32_t) ||
      std::memcmp(all.data(), kMagic, sizeof kMagic) != 0)
    throw format_error(path + ": not a checkpoint (magic mismatch)");

  const size_t body = all.size() - sizeof kMagic - sizeof(uint32_t);
  uint32_t want_crc;
  std::memcpy(&want_crc, all.data() + all.size() - sizeof want_crc,
              sizeof want_crc);
  const uint32_t got_crc =
      uint32_t(crc32(0, all.data() + sizeof kMagic, uInt(body)));
  if (want_crc != got_crc)
    throw format_error(path + ": checksum mismatch (corrupt checkpoint)");

  std::vector<unsigned char> payload(all.begin() + sizeof kMagic,
                                     all.end() - sizeof(uint32_t));
  ByteSource src{payload, path};
  const uint32_t version = src.get<uint32_t>();
  if (version != kVersion)
    throw format_error(path + ": unsupported checkpoint version " +
                       std::to_string(version));
  const std::string arch_str = src.str();
  const auto arch = arch_from(arch_str);
  if (!arch)
    throw format_error(path + ": unknown architecture '" + arch_str + "'");

  Model m = build(*arch, 0);
  m.seed = src.get<uint64_t>();
  m.epochs_trained = src.get<int32_t>();
  m.test_accuracy = src.get<double>();
  m.defense = src.str();

  auto named = m.named_params();
  const uint32_t nblocks = src.get<uint32_t>();
  if (nblocks != named.size())
    throw format_error(path + ": parameter block count disagrees with " +
                       arch_str);
  for (auto& [name, t] : named) {
    const std::string got = src.str();
    if (got != name)
      throw format_error(path + ": unexpected block '" + got + "', wanted '" +
                         name + "'");
    const uint32_t nd = src.get<uint32_t>();
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) d = src.get<int64_t>();
    if (shape != t->shape)
      throw format_error(path + ": shape mismatch in block '" + name + "'");
    src.raw(t->data.data(), t->data.size() * sizeof(double));
  }
  if (src.at != payload.size())
    throw format_error(path + ": trailing bytes after parameter blocks");
  return m;
}

}  // namespace sptlab
