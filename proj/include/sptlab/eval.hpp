#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sptlab/attacks.hpp"
#include "sptlab/data.hpp"
#include "sptlab/models.hpp"
#include "sptlab/spt.hpp"
#include "sptlab/tensor.hpp"

namespace sptlab {

double accuracy(const Model& m, const TensorPtr& images,
                const std::vector<int>& labels);

struct PredictionStats {
  std::array<int64_t, 10> counts{};
  int64_t total = 0;
  int modal_class = -1;
  double modal_fraction = 0.0;
};

PredictionStats prediction_stats(const std::vector<int>& predicted);

// Structure preservation: within each image, pixels sharing a value (bitwise)
// must still share a value after the map. `violations` counts pixels that
// disagree with the first member of their group.
struct StructureReport {
  int64_t images = 0;
  int64_t value_groups = 0;
  int64_t violations = 0;
  bool preserved() const { return violations == 0; }
};

StructureReport check_structure(const TensorPtr& before, const TensorPtr& after);

// One evaluation-matrix cell. `digest` keys the resumable cell cache and is
// derived from the configuration, never from the results.
struct CellResult {
  std::string dataset;
  std::string defense = "-";
  std::string attack;  // none | fgsm | pgd | spt | spt_transfer ("cw" reserved)
  std::string target;  // architecture name
  std::string note = "-";
  uint64_t model_seed = 0;
  int64_t model_epochs = 0;
  uint64_t attack_seed = 0;
  double accuracy = -1.0;
  std::array<int64_t, 10> histogram{};
  std::string digest;
};

struct EvalReport {
  std::vector<CellResult> cells;
};

uint64_t fnv1a(std::string_view s);
std::string digest_hex(std::string_view key);

// Cell metadata drawn from the model under evaluation.
CellResult make_cell(const Model& m, const std::string& dataset,
                     const std::string& attack, const std::string& note,
                     uint64_t attack_seed);

// Canonical cache key: the cell's identity plus attack-specific parameters
// in `extra` (the digest is the FNV-1a of this key).
std::string cell_key(const CellResult& proto, int64_t test_size,
                     const std::string& extra);

// accuracy + predicted-class histogram in one pass
void measure_cell(const Model& m, const TensorPtr& images,
                  const std::vector<int>& labels, CellResult& into);

// Cache lookup by digest(key); on miss, compute and (if dir set) store.
CellResult resolve_cell(const std::string& cells_dir, CellResult proto,
                        const std::string& key,
                        const std::function<void(CellResult&)>& compute);

// Cell cache: <dir>/<digest>.cell, one small text file per cell, written
// atomically so an interrupted run never leaves a torn cell behind.
std::optional<CellResult> load_cell(const std::string& dir,
                                    const std::string& digest);
void save_cell(const std::string& dir, const CellResult& cell);

// Shared setup for the evaluation matrices. `pert` drives the fgsm column
// (epsilon only) and the pgd column; SPT fitting uses alpha/spt_seed/spt.
// When spt_dir is set, fitted transformations are stored there and reused
// (same file scheme as spt_param_path). Cells run in `jobs` threads; every
// cell derives its own seeds, so parallelism never changes results.
struct MatrixJob {
  const Dataset* train = nullptr;  // SPT fitting split
  const Dataset* test = nullptr;   // evaluation split
  double alpha = 0.0;
  uint64_t spt_seed = 1;
  SptTrainConfig spt;
  std::vector<double> gammas;  // empty: default exponent ladder
  PerturbationConfig pert;
  uint64_t pert_seed = 1;  // base seed for PGD random starts
  std::string cells_dir;   // empty: no caching
  std::string spt_dir;     // empty: don't persist fitted transformations
  int jobs = 1;
};

// Four columns per target — clean, fgsm, pgd, spt — each attack fitted and
// evaluated white-box against that target.
EvalReport run_whitebox_matrix(const std::vector<Model>& targets,
                               const MatrixJob& job);

// SPT fitted once against targets[0] (the substitute), applied unchanged to
// every other target. The substitute row doubles as the white-box reference.
EvalReport run_blackbox_matrix(const std::vector<Model>& targets,
                               const MatrixJob& job);

// Records plus an aligned table; byte-identical for identical results (no
// timestamps, fixed formatting).
std::string report_text(const EvalReport& rep);
void write_report(const EvalReport& rep, const std::string& path);

// 8-bit binary PGM (P5), pixels rounded from [0,1].
void write_pgm(const std::string& path, const double* px, int64_t h, int64_t w);
TensorPtr read_pgm(const std::string& path);

// count original/transformed pairs as individual PGMs, a two-row contact
// sheet (originals above, transformed below), and a manifest listing true
// labels and both models' predictions.
void export_examples(const std::string& dir, const std::string& prefix,
                     const TensorPtr& originals, const TensorPtr& transformed,
                     const std::vector<int>& labels,
                     const std::vector<int>& preds_clean,
                     const std::vector<int>& preds_adv, int64_t count);

}  // namespace sptlab
