#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "s2g/core/rng.hpp"
#include "s2g/graph/graph_builder.hpp"
#include "topk.hpp"

namespace s2g::graph {

namespace {

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Deduplicated undirected neighbour sets, sorted.
std::vector<std::vector<std::uint32_t>> undirected_adjacency(const TypedEdgeList& e) {
  std::vector<std::vector<std::uint32_t>> adj(e.node_count);
  for (const Edge& ed : e.edges) {
    adj[ed.src].push_back(ed.dst);
    adj[ed.dst].push_back(ed.src);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

std::vector<double> ppr_from_adjacency(const std::vector<std::vector<std::uint32_t>>& adj,
                                       std::uint32_t seed, double teleport, double tol) {
  const std::size_t n = adj.size();
  std::vector<double> p(n, 0.0);
  std::vector<double> next(n);
  p[seed] = 1.0;
  for (int iter = 0; iter < 100000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    next[seed] = teleport;
    for (std::size_t u = 0; u < n; ++u) {
      if (p[u] == 0.0) continue;
      const double flow = (1.0 - teleport) * p[u];
      if (adj[u].empty()) {
        next[u] += flow;
        continue;
      }
      const double share = flow / static_cast<double>(adj[u].size());
      for (std::uint32_t v : adj[u]) next[v] += share;
    }
    double change = 0.0;
    for (std::size_t u = 0; u < n; ++u) change += std::abs(next[u] - p[u]);
    p.swap(next);
    if (change < tol) break;
  }
  return p;
}

}  // namespace

void TypedEdgeList::validate() const {
  for (const Edge& ed : edges) {
    if (ed.src >= node_count || ed.dst >= node_count) throw std::invalid_argument("edge endpoint out of range");
    if (ed.src == ed.dst) throw std::invalid_argument("self-loop edge");
    if (!std::isfinite(ed.weight)) throw std::invalid_argument("non-finite edge weight");
    if (static_cast<std::size_t>(ed.type) >= kEdgeTypeCount) throw std::invalid_argument("bad edge type");
  }
}

TypedEdgeList normalize_prune(const TypedEdgeList& e, NormScheme scheme, double prune_frac) {
  if (!(prune_frac >= 0.0 && prune_frac < 1.0)) throw std::invalid_argument("prune_frac must lie in [0,1)");
  TypedEdgeList out = e;
  const std::size_t m = out.edges.size();
  if (m == 0) return out;
  if (scheme == NormScheme::log1p) {
    for (Edge& ed : out.edges) {
      if (ed.weight <= -1.0) throw std::invalid_argument("log1p normalization needs weights > -1");
      ed.weight = std::log1p(ed.weight);
    }
  } else {
    double mean = 0.0;
    for (const Edge& ed : out.edges) mean += ed.weight;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (const Edge& ed : out.edges) var += (ed.weight - mean) * (ed.weight - mean);
    const double sd = std::sqrt(var / static_cast<double>(m));
    for (Edge& ed : out.edges) ed.weight = sd > 0.0 ? (ed.weight - mean) / sd : 0.0;
  }
  const auto drop = static_cast<std::size_t>(std::floor(prune_frac * static_cast<double>(m) + 1e-9));
  if (drop == 0) return out;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.edges[a].weight < out.edges[b].weight;
  });
  std::vector<char> keep(m, 1);
  for (std::size_t t = 0; t < drop; ++t) keep[order[t]] = 0;
  std::vector<Edge> kept;
  kept.reserve(m - drop);
  for (std::size_t t = 0; t < m; ++t) {
    if (keep[t]) kept.push_back(out.edges[t]);
  }
  out.edges = std::move(kept);
  return out;
}

TypedEdgeList fuse_views(const TypedEdgeList& diag, const TypedEdgeList& bert) {
  if (diag.node_count != bert.node_count) {
    throw std::invalid_argument("fuse_views: node counts differ (" + std::to_string(diag.node_count) +
                                " vs " + std::to_string(bert.node_count) + ")");
  }
  TypedEdgeList out = diag;
  out.edges.insert(out.edges.end(), bert.edges.begin(), bert.edges.end());
  return out;
}

std::vector<std::uint32_t> component_labels(const TypedEdgeList& e, std::size_t* count) {
  UnionFind uf(e.node_count);
  for (const Edge& ed : e.edges) uf.unite(ed.src, ed.dst);
  // Roots are the smallest member, so root order is smallest-node order.
  std::vector<std::uint32_t> label(e.node_count);
  std::vector<std::uint32_t> root_label(e.node_count, std::numeric_limits<std::uint32_t>::max());
  std::uint32_t next = 0;
  for (std::uint32_t v = 0; v < e.node_count; ++v) {
    const std::uint32_t r = uf.find(v);
    if (root_label[r] == std::numeric_limits<std::uint32_t>::max()) root_label[r] = next++;
    label[v] = root_label[r];
  }
  if (count) *count = next;
  return label;
}

std::size_t count_components(const TypedEdgeList& e) {
  std::size_t c = 0;
  component_labels(e, &c);
  return c;
}

TypedEdgeList mst_bridge(const TypedEdgeList& e, const EmbeddingMatrix& b) {
  if (b.rows != e.node_count) throw std::invalid_argument("mst_bridge: embedding rows != node count");
  std::size_t c = 0;
  const auto label = component_labels(e, &c);
  TypedEdgeList out = e;
  if (c <= 1) return out;

  const std::size_t dim = b.dim;
  std::vector<double> centroid(c * dim, 0.0);
  std::vector<std::size_t> size(c, 0);
  for (std::size_t v = 0; v < e.node_count; ++v) {
    ++size[label[v]];
    for (std::size_t t = 0; t < dim; ++t) centroid[label[v] * dim + t] += b.row(v)[t];
  }
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t t = 0; t < dim; ++t) centroid[k * dim + t] /= static_cast<double>(size[k]);
  }
  auto cdist = [&](std::size_t a, std::size_t bb) {
    double s = 0.0;
    for (std::size_t t = 0; t < dim; ++t) {
      const double d = centroid[a * dim + t] - centroid[bb * dim + t];
      s += d * d;
    }
    return std::sqrt(s);
  };

  std::vector<std::uint32_t> rep(c, 0);
  std::vector<double> rep_dist(c, std::numeric_limits<double>::infinity());
  for (std::uint32_t v = 0; v < e.node_count; ++v) {
    const std::size_t k = label[v];
    double s = 0.0;
    for (std::size_t t = 0; t < dim; ++t) {
      const double d = b.row(v)[t] - centroid[k * dim + t];
      s += d * d;
    }
    if (s < rep_dist[k]) {
      rep_dist[k] = s;
      rep[k] = v;
    }
  }

  // Prim over the complete centroid graph.
  std::vector<char> in_tree(c, 0);
  std::vector<double> best(c, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> link(c, 0);
  in_tree[0] = 1;
  for (std::size_t k = 1; k < c; ++k) {
    best[k] = cdist(0, k);
    link[k] = 0;
  }
  for (std::size_t step = 1; step < c; ++step) {
    std::size_t pick = c;
    for (std::size_t k = 0; k < c; ++k) {
      if (!in_tree[k] && (pick == c || best[k] < best[pick])) pick = k;
    }
    in_tree[pick] = 1;
    const std::uint32_t a = rep[link[pick]];
    const std::uint32_t z = rep[pick];
    const double w = 1.0 / (1.0 + best[pick]);
    out.edges.push_back({a, z, w, EdgeType::mst_bridge});
    out.edges.push_back({z, a, w, EdgeType::mst_bridge});
    for (std::size_t k = 0; k < c; ++k) {
      if (in_tree[k]) continue;
      const double d = cdist(pick, k);
      if (d < best[k]) {
        best[k] = d;
        link[k] = pick;
      }
    }
  }
  return out;
}

std::vector<double> ppr_scores(const TypedEdgeList& e, std::uint32_t seed, double teleport, double tol) {
  if (!(teleport > 0.0 && teleport < 1.0)) throw std::invalid_argument("teleport must lie in (0,1)");
  if (seed >= e.node_count) throw std::invalid_argument("ppr seed out of range");
  return ppr_from_adjacency(undirected_adjacency(e), seed, teleport, tol);
}

TypedEdgeList gdc_ppr(const TypedEdgeList& e, double teleport, std::size_t top_k, double tol) {
  if (!(teleport > 0.0 && teleport < 1.0)) throw std::invalid_argument("teleport must lie in (0,1)");
  const auto adj = undirected_adjacency(e);
  TypedEdgeList out = e;
  std::vector<Scored> cand;
  for (std::uint32_t u = 0; u < e.node_count; ++u) {
    if (adj[u].empty()) continue;
    const auto p = ppr_from_adjacency(adj, u, teleport, tol);
    cand.clear();
    std::size_t nb = 0;
    for (std::uint32_t v = 0; v < e.node_count; ++v) {
      while (nb < adj[u].size() && adj[u][nb] < v) ++nb;
      const bool neighbour = nb < adj[u].size() && adj[u][nb] == v;
      if (v != u && !neighbour && p[v] > 0.0) cand.push_back({p[v], v});
    }
    emit_top_k(out, u, cand, top_k, EdgeType::diffusion);
  }
  return out;
}

std::vector<std::size_t> stratified_quotas(std::span<const std::size_t> counts, std::size_t budget,
                                           std::uint64_t tie_seed) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<std::size_t> q(counts.size(), 0);
  if (total <= budget) return {counts.begin(), counts.end()};
  std::size_t used = 0;
  std::vector<std::size_t> rem(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    q[t] = counts[t] * budget / total;
    rem[t] = counts[t] * budget % total;
    used += q[t];
  }
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(tie_seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t t = 0; used < budget; ++t) {
    ++q[order[t]];
    ++used;
  }
  return q;
}

TypedEdgeList degree_cap_stratified(const TypedEdgeList& e, std::size_t max_out, std::uint64_t seed) {
  if (max_out < 1) throw std::invalid_argument("max_out must be >= 1");
  std::vector<std::vector<std::size_t>> by_src(e.node_count);
  for (std::size_t t = 0; t < e.edges.size(); ++t) by_src[e.edges[t].src].push_back(t);
  std::vector<char> keep(e.edges.size(), 1);
  for (std::uint32_t u = 0; u < e.node_count; ++u) {
    const auto& ids = by_src[u];
    if (ids.size() <= max_out) continue;
    std::array<std::vector<std::size_t>, kEdgeTypeCount> per_type;
    for (std::size_t id : ids) per_type[static_cast<std::size_t>(e.edges[id].type)].push_back(id);
    std::array<std::size_t, kEdgeTypeCount> counts{};
    for (std::size_t t = 0; t < kEdgeTypeCount; ++t) counts[t] = per_type[t].size();
    const auto quota = stratified_quotas(counts, max_out, mix_seed(seed, u));
    for (std::size_t t = 0; t < kEdgeTypeCount; ++t) {
      auto& list = per_type[t];
      std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
        const Edge& x = e.edges[a];
        const Edge& y = e.edges[b];
        if (x.weight != y.weight) return x.weight > y.weight;
        if (x.dst != y.dst) return x.dst < y.dst;
        return a < b;
      });
      for (std::size_t r = quota[t]; r < list.size(); ++r) keep[list[r]] = 0;
    }
  }
  TypedEdgeList out{e.node_count, {}};
  for (std::size_t t = 0; t < e.edges.size(); ++t) {
    if (keep[t]) out.edges.push_back(e.edges[t]);
  }
  return out;
}

double graph_density(std::size_t edge_count, std::size_t n) {
  if (n < 2) throw std::invalid_argument("graph_density: need n >= 2");
  const double nd = static_cast<double>(n);
  return static_cast<double>(edge_count) / (nd * (nd - 1.0) / 2.0);
}

}  // namespace s2g::graph
