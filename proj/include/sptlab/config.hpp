#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sptlab/attacks.hpp"
#include "sptlab/spt.hpp"

namespace sptlab {

// Experiment configuration shared by every subcommand. The field values
// below are the built-in defaults; a config file overrides them and CLI
// flags override both. `resolve` fills environment- and dataset-dependent
// defaults and validates the result.
struct RunConfig {
  std::string dataset = "mnist";  // mnist | fmnist
  std::string data_dir;           // empty: taken from $SPTLAB_DATA_DIR
  int64_t subset = 0;             // 0: full splits; otherwise first-k of both
  uint64_t seed = 1;              // classifier training / attack streams
  uint64_t init_seed = 1;         // transformation weight initialization
  std::string init_scheme = "normal0.5";
  double alpha = -1.0;            // < 0: dataset default (0 mnist, 0.6 fmnist)
  std::vector<double> gammas;     // empty: built-in exponent ladder
  double spt_lr = 1e-4;
  int spt_epochs = 1;
  int targeted_label = -1;        // -1: untargeted
  double epsilon = 0.3;           // perturbation budget (fgsm/pgd)
  double step = 0.01;             // pgd step size
  int iters = 40;                 // pgd iterations
  int jobs = 1;                   // parallel matrix cells
  std::string out = "out";
};

inline constexpr const char* kDataDirEnv = "SPTLAB_DATA_DIR";

double default_alpha(const std::string& dataset);

// Copy of `raw` with every default resolved (data dir from the environment,
// alpha and gammas from the dataset/built-ins), validated. Throws
// usage_error on bad values. An unresolvable data dir is left empty;
// dataset_dir throws when something actually needs it.
RunConfig resolve(const RunConfig& raw);

// <data_dir>/<dataset>: the directory load_dataset reads from.
std::string dataset_dir(const RunConfig& c);

// <out>/models/<dataset>/<arch>[-advtrain].ckpt
std::string checkpoint_path(const RunConfig& c, const std::string& arch,
                            bool defended);

PerturbationConfig pert_of(const RunConfig& c);
SptTrainConfig spt_train_of(const RunConfig& c);

// Shortest exact decimal form of a double (round-trips bit-exactly).
std::string fmt_double(double v);

// INI dump of a resolved config, loadable back through --config. Extra
// per-command settings land in a [command] section. Deterministic: no
// timestamps, fixed key order.
std::string config_text(
    const RunConfig& c, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& extras);

// Writes <out>/effective-config-<command>.txt (atomically).
void write_effective_config(
    const RunConfig& c, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& extras);

}  // namespace sptlab
