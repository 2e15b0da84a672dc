#include "sptlab/eval.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "sptlab/error.hpp"
#include "sptlab/rng.hpp"

namespace sptlab {
namespace {

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

std::string cell_path(const std::string& dir, const std::string& digest) {
  return dir + "/" + digest + ".cell";
}

void check_job(const std::vector<Model>& targets, const MatrixJob& job) {
  if (targets.empty()) throw usage_error("matrix: no target models");
  if (!job.train || !job.test) throw usage_error("matrix: missing datasets");
  if (job.train->size() == 0 || job.test->size() == 0)
    throw usage_error("matrix: empty dataset");
  if (job.jobs < 1) throw usage_error("matrix: jobs must be >= 1");
  if (!job.cells_dir.empty())
    std::filesystem::create_directories(job.cells_dir);
}

std::string spt_key_suffix(const MatrixJob& job) {
  std::ostringstream os;
  os << "alpha=" << fmt17(job.alpha) << "|sseed=" << job.spt_seed
     << "|lr=" << fmt17(job.spt.lr) << "|sep=" << job.spt.epochs
     << "|sbatch=" << job.spt.batch << "|shuffle=" << job.spt.shuffle_seed
     << "|tlabel=" << job.spt.targeted_label << "|ntrain=" << job.train->size();
  if (!job.gammas.empty()) {
    os << "|gammas=";
    for (size_t i = 0; i < job.gammas.size(); ++i)
      os << (i ? "," : "") << fmt17(job.gammas[i]);
  }
  return os.str();
}

std::string pgd_key_suffix(const PerturbationConfig& p) {
  std::ostringstream os;
  os << "eps=" << fmt17(p.epsilon) << "|step=" << fmt17(p.step)
     << "|iters=" << p.iters << "|rs=" << (p.random_start ? 1 : 0);
  return os.str();
}

// fit (or reuse a stored fit of) the transformation against one target
SptParams matrix_spt(const MatrixJob& job, const Model& target) {
  SptParams init = SptParams::init(job.alpha, job.spt_seed, job.gammas);
  if (job.spt_dir.empty()) {
    train_spt(init, target, *job.train, job.spt);
    return init;
  }
  std::filesystem::create_directories(job.spt_dir);
  return fit_or_load_spt(
      spt_param_path(job.spt_dir, job.test->name, arch_name(target.arch),
                     !target.defense.empty(), job.spt_seed, job.alpha),
      job.alpha, job.spt_seed, target, *job.train, job.spt, job.gammas);
}

struct CellTask {
  CellResult proto;
  std::string key;
  std::function<void(CellResult&)> compute;
};

// fixed output order, optional worker pool, first error wins (with the
// cell's identity attached); later cells still land in the cache
EvalReport run_cells(std::vector<CellTask> tasks, const std::string& dir,
                     int jobs) {
  EvalReport rep;
  rep.cells.resize(tasks.size());
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;

  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        rep.cells[i] =
            resolve_cell(dir, tasks[i].proto, tasks[i].key, tasks[i].compute);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error)
          first_error = std::make_exception_ptr(
              std::runtime_error("cell " + tasks[i].proto.target + "/" +
                                 tasks[i].proto.attack + ": " + e.what()));
        return;
      }
    }
  };

  const int n = std::max(1, std::min<int>(jobs, int(tasks.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(size_t(n));
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return rep;
}

}  // namespace

double accuracy(const Model& m, const TensorPtr& images,
                const std::vector<int>& labels) {
  if (int64_t(labels.size()) != images->shape[0])
    throw usage_error("accuracy: label count != image count");
  auto preds = predict_labels(m, images);
  int64_t ok = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++ok;
  return double(ok) / double(preds.size());
}

PredictionStats prediction_stats(const std::vector<int>& predicted) {
  PredictionStats s;
  for (int p : predicted) {
    if (p < 0 || p > 9) throw usage_error("prediction_stats: label out of range");
    ++s.counts[size_t(p)];
  }
  s.total = int64_t(predicted.size());
  if (s.total > 0) {
    const auto it = std::max_element(s.counts.begin(), s.counts.end());
    s.modal_class = int(it - s.counts.begin());
    s.modal_fraction = double(*it) / double(s.total);
  }
  return s;
}

StructureReport check_structure(const TensorPtr& before, const TensorPtr& after) {
  if (!before || !after || before->shape != after->shape)
    throw usage_error("check_structure: shape mismatch");
  if (before->shape.empty()) throw usage_error("check_structure: empty tensor");

  StructureReport rep;
  const int64_t n = before->shape[0];
  const int64_t px = before->size() / n;
  rep.images = n;
  std::unordered_map<uint64_t, double> group;
  for (int64_t i = 0; i < n; ++i) {
    group.clear();
    group.reserve(size_t(px));
    for (int64_t j = 0; j < px; ++j) {
      const uint64_t key = std::bit_cast<uint64_t>(before->data[i * px + j]);
      const double out = after->data[i * px + j];
      auto [it, fresh] = group.emplace(key, out);
      if (fresh)
        ++rep.value_groups;
      else if (std::bit_cast<uint64_t>(it->second) != std::bit_cast<uint64_t>(out))
        ++rep.violations;
    }
  }
  return rep;
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string digest_hex(std::string_view key) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(key)));
  return buf;
}

CellResult make_cell(const Model& m, const std::string& dataset,
                     const std::string& attack, const std::string& note,
                     uint64_t attack_seed) {
  CellResult c;
  c.dataset = dataset;
  c.defense = m.defense.empty() ? "-" : m.defense;
  c.attack = attack;
  c.target = arch_name(m.arch);
  c.note = note;
  c.model_seed = m.seed;
  c.model_epochs = m.epochs_trained;
  c.attack_seed = attack_seed;
  return c;
}

std::string cell_key(const CellResult& proto, int64_t test_size,
                     const std::string& extra) {
  std::ostringstream os;
  os << "cell|v1|" << proto.dataset << "|defense=" << proto.defense
     << "|attack=" << proto.attack << "|target=" << proto.target
     << "|note=" << proto.note << "|mseed=" << proto.model_seed
     << "|mep=" << proto.model_epochs << "|aseed=" << proto.attack_seed
     << "|ntest=" << test_size;
  if (!extra.empty()) os << "|" << extra;
  return os.str();
}

void measure_cell(const Model& m, const TensorPtr& images,
                  const std::vector<int>& labels, CellResult& into) {
  auto preds = predict_labels(m, images);
  if (preds.size() != labels.size())
    throw usage_error("measure_cell: label count != image count");
  int64_t ok = 0;
  into.histogram.fill(0);
  for (size_t i = 0; i < preds.size(); ++i) {
    ++into.histogram[size_t(preds[i])];
    if (preds[i] == labels[i]) ++ok;
  }
  into.accuracy = double(ok) / double(preds.size());
}

CellResult resolve_cell(const std::string& cells_dir, CellResult proto,
                        const std::string& key,
                        const std::function<void(CellResult&)>& compute) {
  proto.digest = digest_hex(key);
  if (!cells_dir.empty()) {
    if (auto hit = load_cell(cells_dir, proto.digest)) return *hit;
  }
  compute(proto);
  if (!cells_dir.empty()) save_cell(cells_dir, proto);
  return proto;
}

std::optional<CellResult> load_cell(const std::string& dir,
                                    const std::string& digest) {
  const std::string path = cell_path(dir, digest);
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;

  std::string magic, version, key;
  if (!(is >> magic >> version) || magic != "sptlab-cell" || version != "v1")
    throw format_error("cell file: bad header in " + path);
  CellResult c;
  auto want = [&](const char* name, auto& into) {
    if (!(is >> key) || key != name || !(is >> into))
      throw format_error(std::string("cell file: expected ") + name + " in " + path);
  };
  want("dataset", c.dataset);
  want("defense", c.defense);
  want("attack", c.attack);
  want("target", c.target);
  want("note", c.note);
  want("model_seed", c.model_seed);
  want("model_epochs", c.model_epochs);
  want("attack_seed", c.attack_seed);
  want("accuracy", c.accuracy);
  if (!(is >> key) || key != "histogram")
    throw format_error("cell file: expected histogram in " + path);
  for (auto& h : c.histogram)
    if (!(is >> h)) throw format_error("cell file: short histogram in " + path);
  want("digest", c.digest);
  if (c.digest != digest)
    throw format_error("cell file: digest mismatch in " + path);
  return c;
}

void save_cell(const std::string& dir, const CellResult& cell) {
  if (cell.digest.size() != 16)
    throw usage_error("save_cell: cell has no digest");
  std::ostringstream os;
  os << "sptlab-cell v1\n";
  os << "dataset " << cell.dataset << "\n";
  os << "defense " << cell.defense << "\n";
  os << "attack " << cell.attack << "\n";
  os << "target " << cell.target << "\n";
  os << "note " << cell.note << "\n";
  os << "model_seed " << cell.model_seed << "\n";
  os << "model_epochs " << cell.model_epochs << "\n";
  os << "attack_seed " << cell.attack_seed << "\n";
  os << "accuracy " << fmt17(cell.accuracy) << "\n";
  os << "histogram";
  for (int64_t h : cell.histogram) os << " " << h;
  os << "\n";
  os << "digest " << cell.digest << "\n";
  write_text_atomic(cell_path(dir, cell.digest), os.str());
}

EvalReport run_whitebox_matrix(const std::vector<Model>& targets,
                               const MatrixJob& job) {
  check_job(targets, job);
  std::vector<CellTask> tasks;
  for (const Model& t : targets) {
    {
      CellTask task;
      task.proto = make_cell(t, job.test->name, "none", "-", 0);
      task.key = cell_key(task.proto, job.test->size(), "");
      task.compute = [&job, &t](CellResult& c) {
        measure_cell(t, job.test->images, job.test->labels, c);
      };
      tasks.push_back(std::move(task));
    }
    {
      CellTask task;
      task.proto = make_cell(t, job.test->name, "fgsm", "white-box", 0);
      task.key = cell_key(task.proto, job.test->size(),
                          "eps=" + fmt17(job.pert.epsilon));
      task.compute = [&job, &t](CellResult& c) {
        measure_cell(t, fgsm(t, job.test->images, job.test->labels,
                             job.pert.epsilon),
                     job.test->labels, c);
      };
      tasks.push_back(std::move(task));
    }
    {
      CellTask task;
      const uint64_t seed = Rng::derive(
          job.pert_seed, std::string("pgd:") + arch_name(t.arch));
      task.proto = make_cell(t, job.test->name, "pgd", "white-box", seed);
      task.key =
          cell_key(task.proto, job.test->size(), pgd_key_suffix(job.pert));
      task.compute = [&job, &t, seed](CellResult& c) {
        PerturbationConfig p = job.pert;
        p.seed = seed;
        measure_cell(t, pgd(t, job.test->images, job.test->labels, p),
                     job.test->labels, c);
      };
      tasks.push_back(std::move(task));
    }
    {
      CellTask task;
      task.proto = make_cell(t, job.test->name, "spt", "white-box",
                             job.spt_seed);
      task.key =
          cell_key(task.proto, job.test->size(), spt_key_suffix(job));
      task.compute = [&job, &t](CellResult& c) {
        SptParams p = matrix_spt(job, t);
        measure_cell(t, transform(p, job.test->images), job.test->labels, c);
      };
      tasks.push_back(std::move(task));
    }
  }
  return run_cells(std::move(tasks), job.cells_dir, job.jobs);
}

EvalReport run_blackbox_matrix(const std::vector<Model>& targets,
                               const MatrixJob& job) {
  check_job(targets, job);
  const Model& sub = targets[0];
  const std::string sub_note =
      std::string("substitute=") + arch_name(sub.arch);

  // the substitute's transformation is fitted at most once, and only if some
  // cell actually needs computing
  struct Shared {
    std::once_flag once;
    TensorPtr transformed;
  };
  auto shared = std::make_shared<Shared>();
  auto transformed_test = [&job, &sub, shared]() {
    std::call_once(shared->once, [&]() {
      SptParams p = matrix_spt(job, sub);
      shared->transformed = transform(p, job.test->images);
    });
    return shared->transformed;
  };

  std::vector<CellTask> tasks;
  for (size_t i = 0; i < targets.size(); ++i) {
    const Model& t = targets[i];
    CellTask task;
    task.proto =
        i == 0 ? make_cell(t, job.test->name, "spt", "white-box-reference",
                           job.spt_seed)
               : make_cell(t, job.test->name, "spt_transfer", sub_note,
                           job.spt_seed);
    std::string extra = spt_key_suffix(job);
    if (i != 0)
      extra += "|sub_mseed=" + std::to_string(sub.seed) +
               "|sub_mep=" + std::to_string(sub.epochs_trained);
    task.key = cell_key(task.proto, job.test->size(), extra);
    task.compute = [&job, &t, transformed_test](CellResult& c) {
      measure_cell(t, transformed_test(), job.test->labels, c);
    };
    tasks.push_back(std::move(task));
  }
  return run_cells(std::move(tasks), job.cells_dir, job.jobs);
}

std::string report_text(const EvalReport& rep) {
  std::ostringstream os;
  os << "# evaluation report: one record per cell, then the aligned view\n";
  for (const CellResult& c : rep.cells) {
    os << "record dataset=" << c.dataset << " defense=" << c.defense
       << " attack=" << c.attack << " target=" << c.target
       << " note=" << c.note << " model_seed=" << c.model_seed
       << " model_epochs=" << c.model_epochs
       << " attack_seed=" << c.attack_seed
       << " accuracy=" << fmt17(c.accuracy) << " histogram=";
    for (size_t i = 0; i < c.histogram.size(); ++i)
      os << (i ? "," : "") << c.histogram[i];
    os << " digest=" << c.digest << "\n";
  }

  os << "\n";
  const char* head[6] = {"dataset", "target", "attack",
                         "defense", "accuracy", "modal"};
  std::array<size_t, 6> w;
  for (size_t i = 0; i < 6; ++i) w[i] = std::strlen(head[i]);
  std::vector<std::array<std::string, 6>> rows;
  for (const CellResult& c : rep.cells) {
    std::array<std::string, 6> row;
    row[0] = c.dataset;
    row[1] = c.target;
    row[2] = c.attack;
    row[3] = c.defense;
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.2f%%", 100.0 * c.accuracy);
    row[4] = acc;
    const auto it = std::max_element(c.histogram.begin(), c.histogram.end());
    const int64_t total =
        std::accumulate(c.histogram.begin(), c.histogram.end(), int64_t{0});
    char modal[48];
    std::snprintf(modal, sizeof modal, "%d (%.1f%%)",
                  int(it - c.histogram.begin()),
                  total ? 100.0 * double(*it) / double(total) : 0.0);
    row[5] = modal;
    for (size_t i = 0; i < 6; ++i) w[i] = std::max(w[i], row[i].size());
    rows.push_back(std::move(row));
  }
  auto line = [&](const std::array<std::string, 6>& row) {
    for (size_t i = 0; i < 6; ++i) {
      os << row[i];
      if (i + 1 < 6) os << std::string(w[i] - row[i].size() + 2, ' ');
    }
    os << "\n";
  };
  std::array<std::string, 6> h;
  for (size_t i = 0; i < 6; ++i) h[i] = head[i];
  line(h);
  for (const auto& row : rows) line(row);
  return os.str();
}

void write_report(const EvalReport& rep, const std::string& path) {
  write_text_atomic(path, report_text(rep));
}

void write_pgm(const std::string& path, const double* px, int64_t h, int64_t w) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot write " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(size_t(h * w));
  for (int64_t i = 0; i < h * w; ++i) {
    const long v = std::lround(255.0 * px[i]);
    bytes[size_t(i)] = static_cast<unsigned char>(std::clamp(v, 0L, 255L));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           std::streamsize(bytes.size()));
  if (!os.flush()) throw io_error("short write to " + path);
}

TensorPtr read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  std::string magic;
  int64_t w = 0, h = 0, maxval = 0;
  if (!(is >> magic >> w >> h >> maxval) || magic != "P5" || maxval != 255 ||
      w < 1 || h < 1)
    throw format_error("pgm: unsupported header in " + path);
  is.get();  // the single whitespace after maxval
  std::vector<unsigned char> bytes(size_t(w * h));
  if (!is.read(reinterpret_cast<char*>(bytes.data()),
               std::streamsize(bytes.size())))
    throw format_error("pgm: truncated pixel data in " + path);
  auto out = Tensor::make({1, 1, h, w});
  for (size_t i = 0; i < bytes.size(); ++i)
    out->data[i] = double(bytes[i]) / 255.0;
  return out;
}

void export_examples(const std::string& dir, const std::string& prefix,
                     const TensorPtr& originals, const TensorPtr& transformed,
                     const std::vector<int>& labels,
                     const std::vector<int>& preds_clean,
                     const std::vector<int>& preds_adv, int64_t count) {
  if (!originals || !transformed || originals->shape != transformed->shape)
    throw usage_error("export_examples: shape mismatch");
  const int64_t n = std::min(count, originals->shape[0]);
  if (n < 1) throw usage_error("export_examples: nothing to export");
  if (int64_t(labels.size()) < n || int64_t(preds_clean.size()) < n ||
      int64_t(preds_adv.size()) < n)
    throw usage_error("export_examples: labels/predictions too short");
  const int64_t h = originals->shape[2], w = originals->shape[3];

  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "# exported examples: original vs transformed\n";
  for (int64_t i = 0; i < n; ++i) {
    const std::string orig =
        prefix + "-" + std::to_string(i) + "-orig.pgm";
    const std::string adv = prefix + "-" + std::to_string(i) + "-adv.pgm";
    write_pgm(dir + "/" + orig, originals->data.data() + i * h * w, h, w);
    write_pgm(dir + "/" + adv, transformed->data.data() + i * h * w, h, w);
    manifest << "example " << i << " label=" << labels[size_t(i)]
             << " pred_clean=" << preds_clean[size_t(i)]
             << " pred_adv=" << preds_adv[size_t(i)] << " orig=" << orig
             << " adv=" << adv << "\n";
  }

  // contact sheet: originals on top, transformed below
  std::vector<double> sheet(size_t(2 * h * n * w));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t r = 0; r < h; ++r)
      for (int64_t cix = 0; cix < w; ++cix) {
        sheet[size_t(r * n * w + i * w + cix)] =
            originals->data[size_t(i * h * w + r * w + cix)];
        sheet[size_t((h + r) * n * w + i * w + cix)] =
            transformed->data[size_t(i * h * w + r * w + cix)];
      }
  write_pgm(dir + "/" + prefix + "-grid.pgm", sheet.data(), 2 * h, n * w);
  write_text_atomic(dir + "/" + prefix + "-manifest.txt", manifest.str());
}

}  // namespace sptlab
