#pragma once

// Training, evaluation, ablation, random search and report emission shared
// by the command-line tool and the tests.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "s2g/core/io.hpp"
#include "s2g/core/optim.hpp"
#include "s2g/data/cohort.hpp"
#include "s2g/eval/metrics.hpp"
#include "s2g/graph/graph_builder.hpp"
#include "s2g/model/model.hpp"

namespace s2g::harness {

/// Everything a run depends on; serializes to flat key=value text.
struct RunConfig {
  model::ModelConfig model;  // d_ts_in / d_flat are filled from the cohort
  model::LossConfig loss;
  graph::GraphBuildConfig graph;
  double lr = 1.7e-4;
  double weight_decay = 0.01;
  double clip = 2.0;  // 0 disables clipping
  std::size_t batch_size = 32;
  std::vector<std::size_t> fanouts{15, 10};
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  // Ablations.
  std::size_t window_hours = data::kSteps;
  std::vector<std::string> drop_groups;
  double edge_dropout = 0.0;
};

KeyValues to_key_values(const RunConfig& c);
/// Starts from `base` and overrides the keys present; unknown keys throw
/// std::invalid_argument.
RunConfig config_from_key_values(const KeyValues& kv, RunConfig base = {});
std::string config_text(const RunConfig& c);

/// Model-ready arrays derived from a cohort.
struct Prepared {
  std::size_t n = 0;
  std::size_t steps = 0;
  std::size_t d_in = 0;  // 2 x d_ts: forward-filled values then decay
  std::size_t d_flat = 0;
  Tensor ts;         // n x steps x d_in
  Tensor step_mask;  // n x steps, 1 where any channel is observed
  Tensor flat;       // n x d_flat
  std::vector<double> y;
};

/// Applies the window truncation (observations before the last
/// `window_hours` steps are dropped before imputation) and zeroes the
/// listed static groups.
Prepared prepare(const data::Cohort& c, std::size_t window_hours = data::kSteps,
                 const std::vector<std::string>& drop_groups = {});

/// Removes round(fraction * E) edges chosen uniformly with `seed`; 0 is a
/// no-op.
graph::TypedEdgeList drop_edges(const graph::TypedEdgeList& e, double fraction, std::uint64_t seed);

/// Model inputs for `targets` plus the context nodes in `nodes` (targets
/// must be the first entries of `nodes`).
model::ModelInputs gather_inputs(const Prepared& d, const std::vector<std::uint32_t>& nodes, std::size_t targets,
                                 graph::TypedEdgeList edges, std::uint64_t noise_seed);

/// Full-graph inference; returns predictions in days for `rows`.
std::vector<double> predict(model::Model& m, const Prepared& d, const graph::TypedEdgeList& edges,
                            const std::vector<std::size_t>& rows, std::uint64_t noise_seed);
eval::MetricReport evaluate_rows(model::Model& m, const Prepared& d, const graph::TypedEdgeList& edges,
                                 const std::vector<std::size_t>& rows, std::uint64_t noise_seed);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_r2 = 0.0;
};

struct RunRecord {
  RunConfig config;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  eval::MetricReport val;
  eval::MetricReport test;
  std::vector<double> test_true;
  std::vector<double> test_pred;
  double seconds = 0.0;
  std::size_t parameters = 0;
};

struct TrainResult {
  model::Model model;  // best-by-validation-R^2 weights
  RunRecord record;
};

/// Mini-batch training with neighbourhood sampling and early stopping on
/// validation R^2. Throws NumericError on divergence.
TrainResult train(const RunConfig& cfg, const data::Cohort& cohort, const graph::TypedEdgeList& edges,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Freshly initialized model for cfg (dims must be filled; seeded by
/// cfg.seed).
model::Model init_model(const RunConfig& cfg);

/// Fixed degree-ordering noise seed for inference.
std::uint64_t eval_noise_seed(const RunConfig& cfg);

/// Row indices of "train", "val" or "test" under the split seeded by
/// cfg.seed.
std::vector<std::size_t> split_rows(const RunConfig& cfg, std::size_t n, const std::string& split);

/// Full-graph metrics of a trained model on one split, with the window,
/// feature-group and edge-dropout settings of `cfg` applied to the inputs.
/// A model built for other cohort dimensions is a DataError.
eval::MetricReport evaluate_split(model::Model& m, const RunConfig& cfg, const data::Cohort& cohort,
                                  const graph::TypedEdgeList& edges, const std::string& split);

/// `base` with validation and test results recomputed under the ablation
/// settings of `variant` and no retraining.
RunRecord reevaluate(model::Model& m, const RunRecord& base, const RunConfig& variant, const data::Cohort& cohort,
                     const graph::TypedEdgeList& edges);

// -- checkpoints -------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, model::Model& m);
/// Rebuilds the model from the stored config and loads its tensors.
model::Model load_checkpoint(const std::filesystem::path& path, RunConfig* cfg_out = nullptr);

// -- run records ---------------------------------------------------------------

void write_run(const std::filesystem::path& dir, const RunRecord& r);
RunRecord read_run(const std::filesystem::path& dir);

// -- search ----------------------------------------------------------------------

/// One uniform draw from the tuning domains (log-uniform learning rate).
RunConfig sample_config(const RunConfig& base, Rng& rng);

struct Trial {
  RunConfig config;
  RunRecord record;
  double val_rmse = 0.0;
};

struct SearchResult {
  std::vector<Trial> trials;
  std::size_t best_rmse = 0;
  std::size_t best_r2 = 0;
};

using TrialRunner = std::function<RunRecord(const RunConfig&)>;
SearchResult random_search(const RunConfig& base, std::size_t n_trials, std::uint64_t seed, const TrialRunner& run);

// -- report ----------------------------------------------------------------------

/// Reads every run directory under `root` (any directory holding run.txt)
/// and writes TSV tables and SVG plots into `out`. Returns the files
/// written. Throws DataError when no runs are found.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& root, const std::filesystem::path& out);

}  // namespace s2g::harness
