#include "s2g/model/model.hpp"

#include <numeric>

namespace s2g::model {

Model Model::init(const ModelConfig& cfg, Rng& rng) {
  if (cfg.d_ts_in == 0 || cfg.d_flat == 0 || cfg.d_model == 0) throw std::invalid_argument("model: zero dimension");
  Model m;
  m.cfg = cfg;
  temporal::TemporalConfig tc;
  tc.d_in = cfg.d_ts_in;
  tc.d_model = cfg.d_model;
  tc.d_state = cfg.d_state;
  tc.layers = cfg.ts_layers;
  tc.dropout = cfg.ts_dropout;
  tc.pool = cfg.pool;
  m.temporal = temporal::TemporalEncoder::init(tc, rng);
  graph::GraphConfig gc;
  gc.d_model = cfg.d_model;
  gc.d_state = cfg.d_state;
  gc.d_edge = cfg.d_edge;
  gc.layers = cfg.gps_layers;
  gc.dropout = cfg.gps_dropout;
  gc.bn_momentum = cfg.bn_momentum;
  m.graph = graph::GraphEncoder::init(gc, rng);
  m.flat = StaticEncoder::init(cfg.d_flat, cfg.d_model, rng);
  m.fusion = FusionWeights::init(cfg.fusion_graph_logit);
  m.head_main = nn::Linear::init(3 * cfg.d_model, 1, rng);
  m.head_ts = nn::Linear::init(cfg.d_model, 1, rng);
  return m;
}

ModelOutputs Model::forward(const ModelInputs& in, Rng& rng, bool training) {
  in.ts.validate();
  const std::size_t n = in.ts.batch(), k = in.target_count;
  if (k == 0 || k > n) throw std::invalid_argument("model: target_count must lie in [1, node count]");
  if (in.x_flat.rank() != 2 || in.x_flat.dim(0) != k) {
    throw ShapeError("model: static rows " + shape_str(in.x_flat.shape()) + " do not match target_count " +
                     std::to_string(k));
  }
  if (in.edges.node_count != n) throw ShapeError("model: edge list node count differs from time-series batch");
  std::vector<std::size_t> head(k);
  std::iota(head.begin(), head.end(), std::size_t{0});

  const Tensor zeros({k, cfg.d_model});
  Var z_ts_all;
  Var z_ts = Var::constant(zeros);
  if (cfg.use_ts || cfg.use_graph) {
    z_ts_all = cfg.use_ts ? temporal(in.ts, rng, training) : Var::constant(Tensor({n, cfg.d_model}));
    z_ts = ad::gather_rows(z_ts_all, head);
  }
  Var z_graph = Var::constant(zeros);
  if (cfg.use_graph) z_graph = ad::gather_rows(graph(z_ts_all, in.edges, in.noise_seed, rng, training), head);
  Var z_flat = Var::constant(zeros);
  if (cfg.use_static) z_flat = flat(Var::constant(in.x_flat), cfg.flat_dropout, rng, training);

  ModelOutputs out;
  out.main = head_main(fuse(z_graph, z_ts, z_flat, fusion.logits));
  out.ts = head_ts(z_ts);
  return out;
}

Var Model::loss(const ModelOutputs& out, std::span<const double> y, const LossConfig& cfg) const {
  LossConfig c = cfg;
  if (!this->cfg.use_ts) c.alpha = 0.0;
  return compute_loss(out.main, out.ts, y, c);
}

nn::ParamList Model::parameters() const {
  nn::ParamList p;
  temporal.collect("temporal", p);
  graph.collect("graph", p);
  flat.collect("flat", p);
  fusion.collect("fusion", p);
  head_main.collect("head_main", p);
  head_ts.collect("head_ts", p);
  return p;
}

std::vector<Tensor*> Model::buffers() { return graph.buffers(); }

std::vector<double> predict_days(const ModelOutputs& out) {
  const auto v = out.main.value().data();
  return inverse_transform(std::span<const double>(v.data(), v.size()));
}

}  // namespace s2g::model
