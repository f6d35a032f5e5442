#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "s2g/core/rng.hpp"
#include "s2g/graph/graph_builder.hpp"
#include "topk.hpp"

namespace s2g::graph {

namespace {

void require_rows(std::size_t n, const char* op) {
  if (n < 2) throw std::invalid_argument(std::string(op) + ": need at least 2 rows");
}

// Shared-code counts of row i against every row, via the inverted index.
void overlap_counts(const DiagnosisMatrix& d, const std::vector<std::vector<std::uint32_t>>& postings,
                    std::size_t i, std::vector<std::uint32_t>& counts,
                    std::vector<std::uint32_t>& touched) {
  for (std::uint32_t j : touched) counts[j] = 0;
  touched.clear();
  for (std::uint32_t c : d.rows[i]) {
    for (std::uint32_t j : postings[c]) {
      if (j == i) continue;
      if (counts[j]++ == 0) touched.push_back(j);
    }
  }
}

std::vector<std::vector<std::uint32_t>> build_postings(const DiagnosisMatrix& d) {
  std::vector<std::vector<std::uint32_t>> postings(d.cols);
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    for (std::uint32_t c : d.rows[i]) {
      if (c >= d.cols) throw std::invalid_argument("diagnosis column out of range");
      postings[c].push_back(static_cast<std::uint32_t>(i));
    }
  }
  return postings;
}

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double diff = a[t] - b[t];
    s += diff * diff;
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += a[t] * b[t];
  return s;
}

}  // namespace

DiagnosisMatrix DiagnosisMatrix::from_rows(std::vector<std::vector<std::uint32_t>> rows,
                                           std::size_t cols) {
  DiagnosisMatrix d;
  d.cols = cols;
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (!r.empty() && r.back() >= cols) throw std::invalid_argument("diagnosis column out of range");
  }
  d.rows = std::move(rows);
  return d;
}

TypedEdgeList tfidf_cosine_knn(const DiagnosisMatrix& d, std::size_t k) {
  const std::size_t n = d.row_count();
  require_rows(n, "tfidf_cosine_knn");
  const auto postings = build_postings(d);
  std::vector<double> idf(d.cols);
  for (std::size_t c = 0; c < d.cols; ++c) {
    idf[c] = std::log(static_cast<double>(n) / (1.0 + static_cast<double>(postings[c].size()))) + 1.0;
  }
  std::vector<double> norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t c : d.rows[i]) norm[i] += idf[c] * idf[c];
    norm[i] = std::sqrt(norm[i]);
  }

  TypedEdgeList out{n, {}};
  std::vector<double> acc(n, 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<Scored> cand;
  std::size_t empty_rows = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d.rows[i].empty()) {
      ++empty_rows;
      continue;
    }
    for (std::uint32_t j : touched) acc[j] = 0.0;
    touched.clear();
    for (std::uint32_t c : d.rows[i]) {
      const double w = idf[c] * idf[c];
      for (std::uint32_t j : postings[c]) {
        if (j == i) continue;
        if (acc[j] == 0.0) touched.push_back(j);
        acc[j] += w;
      }
    }
    cand.clear();
    for (std::uint32_t j : touched) {
      const double s = acc[j] / (norm[i] * norm[j]);
      if (s > 0.0) cand.push_back({s, j});
    }
    emit_top_k(out, static_cast<std::uint32_t>(i), cand, k, EdgeType::diagnosis);
  }
  if (empty_rows > 0) spdlog::debug("tfidf_cosine_knn: {} rows without codes emit no edges", empty_rows);
  return out;
}

TypedEdgeList approx_ip_knn(const EmbeddingMatrix& v, std::size_t k, const IpKnnOptions& opt) {
  const std::size_t n = v.rows;
  TypedEdgeList out{n, {}};
  if (n < 2) return out;
  k = std::min(k, n - 1);
  if (k == 0) return out;
  std::vector<Scored> cand;

  if (n <= opt.exact_threshold) {
    for (std::size_t i = 0; i < n; ++i) {
      cand.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) cand.push_back({dot(v.row(i), v.row(j)), static_cast<std::uint32_t>(j)});
      }
      emit_top_k(out, static_cast<std::uint32_t>(i), cand, k, EdgeType::diagnosis);
    }
    return out;
  }

  // Sign-of-projection buckets; each query probes its own bucket and every
  // bucket one bit away.
  Rng rng(opt.seed);
  const std::size_t bits = std::min<std::size_t>(opt.hash_bits, 30);
  std::vector<double> planes(bits * v.dim);
  for (double& p : planes) p = rng.normal();
  std::vector<std::uint32_t> code(n, 0);
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> buckets;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t h = 0;
    for (std::size_t b = 0; b < bits; ++b) {
      if (dot(v.row(i), {planes.data() + b * v.dim, v.dim}) >= 0.0) h |= 1u << b;
    }
    code[i] = h;
    buckets[h].push_back(static_cast<std::uint32_t>(i));
  }
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    auto probe = [&](std::uint32_t h) {
      auto it = buckets.find(h);
      if (it == buckets.end()) return;
      for (std::uint32_t j : it->second) {
        if (j != i) cand.push_back({dot(v.row(i), v.row(j)), j});
      }
    };
    probe(code[i]);
    for (std::size_t b = 0; b < bits; ++b) probe(code[i] ^ (1u << b));
    emit_top_k(out, static_cast<std::uint32_t>(i), cand, k, EdgeType::diagnosis);
  }
  return out;
}

TypedEdgeList approx_ip_knn(const DiagnosisMatrix& d, std::size_t k) {
  const std::size_t n = d.row_count();
  TypedEdgeList out{n, {}};
  if (n < 2) return out;
  k = std::min(k, n - 1);
  if (k == 0) return out;
  const auto postings = build_postings(d);
  std::vector<std::uint32_t> counts(n, 0);
  std::vector<std::uint32_t> touched;
  std::vector<Scored> cand;
  for (std::size_t i = 0; i < n; ++i) {
    overlap_counts(d, postings, i, counts, touched);
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.push_back({static_cast<double>(counts[j]), static_cast<std::uint32_t>(j)});
    }
    emit_top_k(out, static_cast<std::uint32_t>(i), cand, k, EdgeType::diagnosis);
  }
  return out;
}

TypedEdgeList penalized_cooccurrence_knn(const DiagnosisMatrix& d, std::size_t k) {
  const std::size_t n = d.row_count();
  TypedEdgeList out{n, {}};
  const auto postings = build_postings(d);
  std::vector<std::uint32_t> counts(n, 0);
  std::vector<std::uint32_t> touched;
  std::vector<Scored> cand;
  for (std::size_t i = 0; i < n; ++i) {
    if (d.rows[i].empty()) continue;
    overlap_counts(d, postings, i, counts, touched);
    cand.clear();
    const double di = static_cast<double>(d.rows[i].size());
    for (std::uint32_t j : touched) {
      const double c = counts[j];
      cand.push_back({c * c / (di * static_cast<double>(d.rows[j].size())), j});
    }
    emit_top_k(out, static_cast<std::uint32_t>(i), cand, k, EdgeType::diagnosis);
  }
  return out;
}

double kernel_sigma(const EmbeddingMatrix& b) {
  const std::size_t n = b.rows;
  require_rows(n, "kernel_sigma");
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) dist.push_back(std::sqrt(sq_distance(b.row(i), b.row(j))));
  }
  const std::size_t m = dist.size();
  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  double median = *mid;
  if (m % 2 == 0) median = 0.5 * (median + *std::max_element(dist.begin(), mid));
  const double sigma = median / std::sqrt(2.0);
  if (!(sigma > 0.0)) {
    spdlog::warn("kernel_sigma: median pairwise distance is 0, using sigma = 1");
    return 1.0;
  }
  return sigma;
}

TypedEdgeList embedding_kernel_knn(const EmbeddingMatrix& b, std::size_t k) {
  const std::size_t n = b.rows;
  require_rows(n, "embedding_kernel_knn");
  const double sigma = kernel_sigma(b);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  TypedEdgeList out{n, {}};
  k = std::min(k, n - 1);
  std::vector<Scored> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) {
        cand.push_back({std::exp(-sq_distance(b.row(i), b.row(j)) * inv), static_cast<std::uint32_t>(j)});
      }
    }
    emit_top_k(out, static_cast<std::uint32_t>(i), cand, k, EdgeType::semantic);
  }
  return out;
}

}  // namespace s2g::graph
