#pragma once

#include <algorithm>
#include <vector>

#include "s2g/graph/graph_builder.hpp"

namespace s2g::graph {

struct Scored {
  double score;
  std::uint32_t index;
};

// Higher score first, then lower index.
inline bool ranks_before(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

inline void emit_top_k(TypedEdgeList& out, std::uint32_t src, std::vector<Scored>& cand,
                       std::size_t k, EdgeType type) {
  const std::size_t take = std::min(k, cand.size());
  if (take == 0) return;
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                    ranks_before);
  for (std::size_t t = 0; t < take; ++t) out.edges.push_back({src, cand[t].index, cand[t].score, type});
}

}  // namespace s2g::graph
