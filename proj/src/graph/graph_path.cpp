#include "s2g/graph/graph_path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace s2g::graph {

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  return {nn::Linear::init(in, hidden, rng), nn::Linear::init(hidden, out, rng)};
}

void Mlp::collect(const std::string& prefix, nn::ParamList& out) const {
  first.collect(prefix + ".0", out);
  second.collect(prefix + ".1", out);
}

NodeInit NodeInit::init(std::size_t d_model, Rng& rng) {
  return {nn::Linear::init(d_model, d_model, rng), nn::LayerNorm::init(d_model),
          nn::Linear::init(d_model, d_model, rng)};
}

Var NodeInit::operator()(const Var& z) const { return second(norm(first(z))); }

void NodeInit::collect(const std::string& prefix, nn::ParamList& out) const {
  first.collect(prefix + ".0", out);
  norm.collect(prefix + ".norm", out);
  second.collect(prefix + ".1", out);
}

Var softmax_aggregate(const Var& x, const TypedEdgeList& edges, const Var& type_vec, const Var& weight_vec,
                      const Var& beta, double msg_eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) != edges.node_count) {
    throw ShapeError("softmax_aggregate: x " + shape_str(xv.shape()) + " for " +
                     std::to_string(edges.node_count) + " nodes");
  }
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  if (type_vec.shape() != Shape{kEdgeTypeCount, d} || weight_vec.shape() != Shape{d} || beta.value().size() != 1) {
    throw ShapeError("softmax_aggregate: parameter shapes do not match width " + std::to_string(d));
  }
  const std::size_t m = edges.edges.size();
  // Deterministic per-destination order.
  auto order = std::make_shared<std::vector<std::size_t>>(m);
  std::iota(order->begin(), order->end(), std::size_t{0});
  std::stable_sort(order->begin(), order->end(), [&](std::size_t a, std::size_t b) {
    const Edge& ea = edges.edges[a];
    const Edge& eb = edges.edges[b];
    if (ea.dst != eb.dst) return ea.dst < eb.dst;
    return ea.src < eb.src;
  });
  auto offsets = std::make_shared<std::vector<std::size_t>>(n + 1, 0);
  for (const Edge& ed : edges.edges) {
    if (ed.src >= n || ed.dst >= n) throw std::invalid_argument("softmax_aggregate: edge endpoint out of range");
    ++(*offsets)[ed.dst + 1];
  }
  for (std::size_t i = 0; i < n; ++i) (*offsets)[i + 1] += (*offsets)[i];

  // Messages and attention, stored in sorted-edge order.
  auto msg = std::make_shared<std::vector<double>>(m * d);
  auto att = std::make_shared<std::vector<double>>(m * d);
  auto active = std::make_shared<std::vector<char>>(m * d);
  const double b = beta.value()[0];
  const double* tv = type_vec.value().ptr();
  const double* wv = weight_vec.value().ptr();
  for (std::size_t r = 0; r < m; ++r) {
    const Edge& ed = edges.edges[(*order)[r]];
    const double* xs = xv.ptr() + ed.src * d;
    const double* te = tv + static_cast<std::size_t>(ed.type) * d;
    for (std::size_t c = 0; c < d; ++c) {
      const double pre = xs[c] + te[c] + ed.weight * wv[c];
      (*active)[r * d + c] = pre > 0.0;
      (*msg)[r * d + c] = (pre > 0.0 ? pre : 0.0) + msg_eps;
    }
  }
  Tensor agg({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = (*offsets)[i], hi = (*offsets)[i + 1];
    if (lo == hi) continue;
    for (std::size_t c = 0; c < d; ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r = lo; r < hi; ++r) mx = std::max(mx, b * (*msg)[r * d + c]);
      double z = 0.0;
      for (std::size_t r = lo; r < hi; ++r) {
        const double e = std::exp(b * (*msg)[r * d + c] - mx);
        (*att)[r * d + c] = e;
        z += e;
      }
      double acc = 0.0;
      for (std::size_t r = lo; r < hi; ++r) {
        (*att)[r * d + c] /= z;
        acc += (*att)[r * d + c] * (*msg)[r * d + c];
      }
      agg.at(i, c) = acc;
    }
  }

  std::vector<std::uint32_t> src(m);
  std::vector<std::uint8_t> type(m);
  std::vector<double> weight(m);
  for (std::size_t r = 0; r < m; ++r) {
    const Edge& ed = edges.edges[(*order)[r]];
    src[r] = ed.src;
    type[r] = static_cast<std::uint8_t>(ed.type);
    weight[r] = ed.weight;
  }

  return ad::make_result(
      std::move(agg), {x, type_vec, weight_vec, beta},
      [n, d, b, offsets, msg, att, active, src = std::move(src), type = std::move(type),
       weight = std::move(weight)](ad::Node& self) {
        const auto& px = self.parents[0];
        const auto& pt = self.parents[1];
        const auto& pw = self.parents[2];
        const auto& pb = self.parents[3];
        double* gx = px->requires_grad ? px->grad_buffer().ptr() : nullptr;
        double* gt = pt->requires_grad ? pt->grad_buffer().ptr() : nullptr;
        double* gw = pw->requires_grad ? pw->grad_buffer().ptr() : nullptr;
        double g_beta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t lo = (*offsets)[i], hi = (*offsets)[i + 1];
          for (std::size_t c = 0; c < d; ++c) {
            const double g = self.grad.at(i, c);
            if (g == 0.0 || lo == hi) continue;
            const double agg = self.value.at(i, c);
            double second = 0.0;
            for (std::size_t r = lo; r < hi; ++r) {
              const double a = (*att)[r * d + c];
              const double mv = (*msg)[r * d + c];
              second += a * mv * mv;
              if (!(*active)[r * d + c]) continue;
              const double g_pre = g * a * (1.0 + b * (mv - agg));
              if (gx) gx[src[r] * d + c] += g_pre;
              if (gt) gt[type[r] * d + c] += g_pre;
              if (gw) gw[c] += g_pre * weight[r];
            }
            g_beta += g * (second - agg * agg);
          }
        }
        if (pb->requires_grad) pb->grad_buffer()[0] += g_beta;
      },
      "softmax_aggregate");
}

LocalConv LocalConv::init(std::size_t d_model, std::size_t d_edge, Rng& rng) {
  LocalConv conv;
  Tensor table({kEdgeTypeCount, d_edge});
  for (double& v : table.storage()) v = rng.normal() * 0.1;
  conv.type_table = Var::parameter(std::move(table));
  conv.type_proj = Var::parameter(nn::glorot_uniform(d_edge, d_model, rng));
  conv.weight_vec = Var::parameter(Tensor({d_model}, 1.0));
  conv.beta = Var::parameter(Tensor({1}, 1.0));
  conv.mlp = Mlp::init(d_model, 2 * d_model, d_model, rng);
  return conv;
}

Var LocalConv::operator()(const Var& x, const TypedEdgeList& edges) const {
  const Var type_vec = ad::matmul(type_table, type_proj);
  return mlp(ad::add(x, softmax_aggregate(x, edges, type_vec, weight_vec, beta, msg_eps)));
}

void LocalConv::collect(const std::string& prefix, nn::ParamList& out) const {
  out.push_back({prefix + ".type_table", type_table});
  out.push_back({prefix + ".type_proj", type_proj});
  out.push_back({prefix + ".weight_vec", weight_vec});
  out.push_back({prefix + ".beta", beta});
  mlp.collect(prefix + ".mlp", out);
}

std::vector<std::size_t> degree_order(const TypedEdgeList& edges, std::uint64_t noise_seed) {
  const std::size_t n = edges.node_count;
  std::vector<double> key(n, 0.0);
  for (const Edge& ed : edges.edges) {
    key[ed.src] += 1.0;
    key[ed.dst] += 1.0;
  }
  Rng rng(noise_seed);
  for (double& k : key) k += 0.01 * rng.uniform();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return order;
}

Var global_mix(const Var& x, const TypedEdgeList& edges, const temporal::SsmBlock& block, std::uint64_t noise_seed,
               double dropout, Rng& rng, bool training) {
  const std::size_t n = x.value().dim(0), d = x.value().dim(1);
  const auto order = degree_order(edges, noise_seed);
  std::vector<std::size_t> inverse(n);
  for (std::size_t p = 0; p < n; ++p) inverse[order[p]] = p;
  Var seq = ad::reshape(ad::gather_rows(x, order), {1, n, d});
  Var mixed = ad::reshape(block(seq, dropout, rng, training), {n, d});
  return ad::gather_rows(mixed, inverse);
}

GpsBlock GpsBlock::init(std::size_t d_model, std::size_t d_state, std::size_t d_edge, double bn_momentum, Rng& rng) {
  GpsBlock blk;
  blk.local = LocalConv::init(d_model, d_edge, rng);
  blk.global = temporal::SsmBlock::init(d_model, d_state, rng);
  blk.bn_gain = Var::parameter(Tensor({d_model}, 1.0));
  blk.bn_bias = Var::parameter(Tensor({d_model}));
  blk.bn = {Tensor({d_model}), Tensor({d_model}, 1.0), bn_momentum};
  blk.norm = nn::LayerNorm::init(d_model);
  blk.mlp = Mlp::init(d_model, 2 * d_model, d_model, rng);
  return blk;
}

Var GpsBlock::operator()(const Var& x, const TypedEdgeList& edges, std::uint64_t noise_seed, double dropout,
                         Rng& rng, bool training) {
  const Var h = local(x, edges);
  const Var g = global_mix(x, edges, global, noise_seed, dropout, rng, training);
  const Var u = ad::batch_norm(ad::add(h, g), bn_gain, bn_bias, bn, training);
  return ad::add(x, ad::dropout(mlp(norm(u)), dropout, rng, training));
}

void GpsBlock::collect(const std::string& prefix, nn::ParamList& out) const {
  local.collect(prefix + ".local", out);
  global.collect(prefix + ".global", out);
  out.push_back({prefix + ".bn_gain", bn_gain});
  out.push_back({prefix + ".bn_bias", bn_bias});
  norm.collect(prefix + ".norm", out);
  mlp.collect(prefix + ".mlp", out);
}

GraphEncoder GraphEncoder::init(const GraphConfig& cfg, Rng& rng) {
  GraphEncoder enc;
  enc.cfg = cfg;
  enc.node_init = NodeInit::init(cfg.d_model, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    enc.blocks.push_back(GpsBlock::init(cfg.d_model, cfg.d_state, cfg.d_edge, cfg.bn_momentum, rng));
  }
  return enc;
}

Var GraphEncoder::operator()(const Var& z_ts, const TypedEdgeList& edges, std::uint64_t noise_seed, Rng& rng,
                             bool training) {
  Var x = node_init(z_ts);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    x = blocks[l](x, edges, mix_seed(noise_seed, l), cfg.dropout, rng, training);
  }
  return x;
}

void GraphEncoder::collect(const std::string& prefix, nn::ParamList& out) const {
  node_init.collect(prefix + ".init", out);
  for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].collect(prefix + ".block" + std::to_string(l), out);
}

std::vector<Tensor*> GraphEncoder::buffers() {
  std::vector<Tensor*> out;
  for (auto& b : blocks) {
    out.push_back(&b.bn.running_mean);
    out.push_back(&b.bn.running_var);
  }
  return out;
}

Subgraph sample_neighborhood(const TypedEdgeList& e, const std::vector<std::uint32_t>& seeds,
                             const std::vector<std::size_t>& fanouts, std::uint64_t seed) {
  for (std::size_t f : fanouts) {
    if (f == 0) throw std::invalid_argument("fanouts must be positive");
  }
  std::vector<std::vector<std::size_t>> in_edges(e.node_count);
  for (std::size_t t = 0; t < e.edges.size(); ++t) in_edges[e.edges[t].dst].push_back(t);

  Subgraph sg;
  std::unordered_map<std::uint32_t, std::uint32_t> local;
  auto intern = [&](std::uint32_t g) {
    auto [it, fresh] = local.emplace(g, static_cast<std::uint32_t>(sg.nodes.size()));
    if (fresh) sg.nodes.push_back(g);
    return std::pair{it->second, fresh};
  };
  std::vector<std::uint32_t> frontier;
  for (std::uint32_t s : seeds) {
    if (s >= e.node_count) throw std::invalid_argument("seed node " + std::to_string(s) + " out of range");
    if (intern(s).second) frontier.push_back(s);
  }
  sg.seed_count = sg.nodes.size();

  Rng rng(seed);
  std::vector<std::size_t> pool;
  for (std::size_t fan : fanouts) {
    std::vector<std::uint32_t> next;
    for (std::uint32_t v : frontier) {
      pool = in_edges[v];
      const std::size_t take = std::min(fan, pool.size());
      // Partial Fisher-Yates.
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      for (std::size_t i = 0; i < take; ++i) {
        const Edge& ed = e.edges[pool[i]];
        auto [ls, fresh] = intern(ed.src);
        if (fresh) next.push_back(ed.src);
        sg.edges.edges.push_back({ls, local.at(v), ed.weight, ed.type});
      }
    }
    frontier = std::move(next);
  }
  sg.edges.node_count = sg.nodes.size();
  return sg;
}

}  // namespace s2g::graph
