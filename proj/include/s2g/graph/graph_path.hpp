#pragma once

// Graph encoder: node initialization, typed/weighted softmax-aggregation
// message passing, degree-ordered state-space global mixing and the
// residual block update.

#include <cstdint>
#include <string>
#include <vector>

#include "s2g/core/autodiff.hpp"
#include "s2g/core/nn.hpp"
#include "s2g/graph/graph_builder.hpp"
#include "s2g/temporal/temporal_path.hpp"

namespace s2g::graph {

using ad::Var;

/// Linear -> ReLU -> Linear.
struct Mlp {
  nn::Linear first;
  nn::Linear second;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Var operator()(const Var& x) const { return second(ad::relu(first(x))); }
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// x0 = second(LayerNorm(first(z))).
struct NodeInit {
  nn::Linear first;
  nn::LayerNorm norm;
  nn::Linear second;

  static NodeInit init(std::size_t d_model, Rng& rng);
  Var operator()(const Var& z) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// Per-channel softmax aggregation over in-edges of
///   m_e = relu(x[src] + type_vec[type] + w_e * weight_vec) + msg_eps
/// with temperature `beta` (shape {1}). Rows without in-edges get 0.
/// Reduction order per destination is by ascending source, then edge order.
Var softmax_aggregate(const Var& x, const TypedEdgeList& edges, const Var& type_vec, const Var& weight_vec,
                      const Var& beta, double msg_eps = 1e-7);

struct LocalConv {
  Var type_table;  // 4 x d_edge
  Var type_proj;   // d_edge x d_model
  Var weight_vec;  // d_model
  Var beta;        // {1}
  Mlp mlp;
  double msg_eps = 1e-7;

  static LocalConv init(std::size_t d_model, std::size_t d_edge, Rng& rng);
  /// h = mlp(x + aggregate(x)).
  Var operator()(const Var& x, const TypedEdgeList& edges) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// Nodes sorted by (in + out degree + uniform[0, 0.01) noise); ties in the
/// final key keep node order. The noise stream is Rng(noise_seed), one draw
/// per node in index order.
std::vector<std::size_t> degree_order(const TypedEdgeList& edges, std::uint64_t noise_seed);

/// Runs `block` over the degree-ordered node sequence and scatters back.
Var global_mix(const Var& x, const TypedEdgeList& edges, const temporal::SsmBlock& block,
               std::uint64_t noise_seed, double dropout, Rng& rng, bool training);

struct GpsBlock {
  LocalConv local;
  temporal::SsmBlock global;
  Var bn_gain;
  Var bn_bias;
  ad::BatchNormState bn;
  nn::LayerNorm norm;
  Mlp mlp;

  static GpsBlock init(std::size_t d_model, std::size_t d_state, std::size_t d_edge, double bn_momentum, Rng& rng);
  /// u = BN(local + global); x + Dropout(mlp(LN(u))).
  Var operator()(const Var& x, const TypedEdgeList& edges, std::uint64_t noise_seed, double dropout, Rng& rng,
                 bool training);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

struct GraphConfig {
  std::size_t d_model = 128;
  std::size_t d_state = 16;
  std::size_t d_edge = 8;
  std::size_t layers = 2;
  double dropout = 0.1;
  double bn_momentum = 0.1;
};

struct GraphEncoder {
  GraphConfig cfg;
  NodeInit node_init;
  std::vector<GpsBlock> blocks;

  static GraphEncoder init(const GraphConfig& cfg, Rng& rng);
  /// N x d_model temporal embeddings -> N x d_model node states.
  Var operator()(const Var& z_ts, const TypedEdgeList& edges, std::uint64_t noise_seed, Rng& rng, bool training);
  void collect(const std::string& prefix, nn::ParamList& out) const;
  /// Batch-norm running statistics, for checkpoints.
  std::vector<Tensor*> buffers();
};

/// Sampled multi-hop in-neighbourhood. Local ids: seeds first (in the given
/// order), then newly reached nodes in discovery order.
struct Subgraph {
  std::vector<std::uint32_t> nodes;  // local -> global
  std::size_t seed_count = 0;
  TypedEdgeList edges;               // only sampled edges, local ids
};

/// Hop h samples up to fanouts[h] in-edges (without replacement) for each
/// node first reached at hop h-1; hop 1 expands the seeds.
Subgraph sample_neighborhood(const TypedEdgeList& e, const std::vector<std::uint32_t>& seeds,
                             const std::vector<std::size_t>& fanouts, std::uint64_t seed);

}  // namespace s2g::graph
