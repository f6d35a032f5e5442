#pragma once

// The full length-of-stay regressor: temporal encoder over every node of a
// (sub)graph, graph encoder on the temporal embeddings, static encoder on the
// target rows, softmax fusion and the two linear heads.

#include <cstdint>
#include <vector>

#include "s2g/graph/graph_path.hpp"
#include "s2g/model/fusion_loss.hpp"
#include "s2g/temporal/temporal_path.hpp"

namespace s2g::model {

struct ModelConfig {
  std::size_t d_ts_in = 0;
  std::size_t d_flat = 0;
  std::size_t d_model = 128;
  std::size_t d_state = 16;
  std::size_t ts_layers = 2;
  double ts_dropout = 0.1;
  temporal::PoolMode pool = temporal::PoolMode::last;
  std::size_t gps_layers = 2;
  double gps_dropout = 0.1;
  std::size_t d_edge = 8;
  double bn_momentum = 0.1;
  double flat_dropout = 0.1;
  double fusion_graph_logit = 0.5;
  bool use_graph = true;
  bool use_ts = true;
  bool use_static = true;
};

/// Rows [0, target_count) of `ts` are the stays being predicted; the rest
/// are context nodes reached through `edges` (local ids).
struct ModelInputs {
  temporal::TimeSeriesBatch ts;
  Tensor x_flat;  // target_count x d_flat
  graph::TypedEdgeList edges;
  std::size_t target_count = 0;
  std::uint64_t noise_seed = 0;
};

/// Log-domain head outputs, target_count x 1 each.
struct ModelOutputs {
  Var main;
  Var ts;
};

struct Model {
  ModelConfig cfg;
  temporal::TemporalEncoder temporal;
  graph::GraphEncoder graph;
  StaticEncoder flat;
  FusionWeights fusion;
  nn::Linear head_main;
  nn::Linear head_ts;

  static Model init(const ModelConfig& cfg, Rng& rng);
  ModelOutputs forward(const ModelInputs& in, Rng& rng, bool training);
  /// Loss with alpha forced to 0 when the temporal branch is disabled.
  Var loss(const ModelOutputs& out, std::span<const double> y, const LossConfig& cfg) const;
  nn::ParamList parameters() const;
  std::vector<Tensor*> buffers();
};

/// max(0, expm1(main)) per row.
std::vector<double> predict_days(const ModelOutputs& out);

}  // namespace s2g::model
