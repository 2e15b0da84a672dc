#include "sptlab/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sptlab/error.hpp"

namespace sptlab {
namespace {

const SptParams kDefaults;  // carries the built-in exponent ladder

}  // namespace

double default_alpha(const std::string& dataset) {
  if (dataset == "mnist") return 0.0;
  if (dataset == "fmnist") return 0.6;
  throw usage_error("unknown dataset '" + dataset + "' (mnist|fmnist)");
}

RunConfig resolve(const RunConfig& raw) {
  RunConfig c = raw;
  if (c.dataset != "mnist" && c.dataset != "fmnist")
    throw usage_error("unknown dataset '" + c.dataset + "' (mnist|fmnist)");
  if (c.data_dir.empty()) {
    const char* env = std::getenv(kDataDirEnv);
    if (env != nullptr) c.data_dir = env;
  }
  if (c.alpha < 0.0) c.alpha = default_alpha(c.dataset);
  if (c.gammas.empty()) c.gammas = kDefaults.gammas;
  for (double g : c.gammas)
    if (!(g > 0.0)) throw usage_error("gammas must be positive");
  if (c.init_scheme != "normal0.5")
    throw usage_error("unknown init scheme '" + c.init_scheme +
                      "' (normal0.5)");
  if (c.subset < 0) throw usage_error("subset must be >= 0");
  if (!(c.spt_lr > 0.0)) throw usage_error("spt-lr must be positive");
  if (c.spt_epochs < 1) throw usage_error("spt-epochs must be >= 1");
  if (c.targeted_label < -1 || c.targeted_label > 9)
    throw usage_error("targeted-label must be -1..9");
  if (c.epsilon < 0.0) throw usage_error("epsilon must be >= 0");
  if (c.step < 0.0) throw usage_error("step must be >= 0");
  if (c.iters < 1) throw usage_error("iters must be >= 1");
  if (c.jobs < 1) throw usage_error("jobs must be >= 1");
  if (c.out.empty()) throw usage_error("output directory must not be empty");
  return c;
}

std::string dataset_dir(const RunConfig& c) {
  if (c.data_dir.empty())
    throw usage_error(std::string("no data directory: pass --data-dir or set ") +
                      kDataDirEnv);
  return c.data_dir + "/" + c.dataset;
}

std::string checkpoint_path(const RunConfig& c, const std::string& arch,
                            bool defended) {
  return c.out + "/models/" + c.dataset + "/" + arch +
         (defended ? "-advtrain.ckpt" : ".ckpt");
}

PerturbationConfig pert_of(const RunConfig& c) {
  PerturbationConfig p;
  p.epsilon = c.epsilon;
  p.step = c.step;
  p.iters = c.iters;
  return p;
}

SptTrainConfig spt_train_of(const RunConfig& c) {
  SptTrainConfig s;
  s.lr = c.spt_lr;
  s.epochs = c.spt_epochs;
  s.targeted_label = c.targeted_label;
  s.shuffle_seed = c.seed;
  return s;
}

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw usage_error("unformattable double");
  return std::string(buf, end);
}

std::string config_text(
    const RunConfig& c, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& extras) {
  std::ostringstream os;
  os << "# effective configuration, all defaults resolved\n";
  os << "# reusable as input: spt-lab --config <this file> " << command << "\n";
  os << "dataset=" << c.dataset << "\n";
  os << "data-dir=" << c.data_dir << "\n";
  os << "subset=" << c.subset << "\n";
  os << "seed=" << c.seed << "\n";
  os << "init-seed=" << c.init_seed << "\n";
  os << "init-scheme=" << c.init_scheme << "\n";
  os << "alpha=" << fmt_double(c.alpha) << "\n";
  os << "gammas=";
  for (size_t i = 0; i < c.gammas.size(); ++i)
    os << (i ? "," : "") << fmt_double(c.gammas[i]);
  os << "\n";
  os << "spt-lr=" << fmt_double(c.spt_lr) << "\n";
  os << "spt-epochs=" << c.spt_epochs << "\n";
  os << "targeted-label=" << c.targeted_label << "\n";
  os << "epsilon=" << fmt_double(c.epsilon) << "\n";
  os << "step=" << fmt_double(c.step) << "\n";
  os << "iters=" << c.iters << "\n";
  os << "jobs=" << c.jobs << "\n";
  os << "out=" << c.out << "\n";
  if (!extras.empty()) {
    os << "\n[" << command << "]\n";
    for (const auto& [k, v] : extras) os << k << "=" << v << "\n";
  }
  return os.str();
}

void write_effective_config(
    const RunConfig& c, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& extras) {
  std::filesystem::create_directories(c.out);
  const std::string path = c.out + "/effective-config-" + command + ".txt";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot write " + tmp);
    os << config_text(c, command, extras);
    if (!os.flush()) throw io_error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw io_error("cannot rename " + tmp + " to " + path);
}

}  // namespace sptlab
