#pragma once

// Multi-view patient similarity graph construction: three diagnosis
// similarity strategies, the Gaussian-kernel embedding graph, typed fusion,
// MST / personalized-PageRank rewiring, weight normalization with pruning,
// and stratified out-degree capping.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace s2g::graph {

enum class EdgeType : std::uint8_t { diagnosis = 0, semantic = 1, mst_bridge = 2, diffusion = 3 };
inline constexpr std::size_t kEdgeTypeCount = 4;

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  double weight = 0.0;
  EdgeType type = EdgeType::diagnosis;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed, typed, weighted edges over nodes [0, node_count).
struct TypedEdgeList {
  std::size_t node_count = 0;
  std::vector<Edge> edges;

  /// Throws std::invalid_argument on out-of-range ids, self-loops or
  /// non-finite weights.
  void validate() const;
  std::size_t size() const { return edges.size(); }
};

/// Sparse binary patient x code matrix; each row holds sorted, unique
/// column indices.
struct DiagnosisMatrix {
  std::size_t cols = 0;
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<std::string> code_ids;

  std::size_t row_count() const { return rows.size(); }
  static DiagnosisMatrix from_rows(std::vector<std::vector<std::uint32_t>> rows, std::size_t cols);
};

/// Dense row-major N x dim matrix.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

// -- similarity views ----------------------------------------------------------

/// Top-k cosine neighbours over IDF-reweighted rows, idf(c) = ln(N/(1+df(c))) + 1.
/// Zero-similarity pairs are never linked; all-zero rows emit nothing.
TypedEdgeList tfidf_cosine_knn(const DiagnosisMatrix& d, std::size_t k);

struct IpKnnOptions {
  /// Above this many rows the search switches to random-projection buckets.
  std::size_t exact_threshold = 100000;
  std::size_t hash_bits = 12;
  std::uint64_t seed = 0;
};

/// Top-k inner-product neighbours of dense rows (exact below the threshold).
/// k >= N is truncated to N-1. Ties go to the lower neighbour index.
TypedEdgeList approx_ip_knn(const EmbeddingMatrix& v, std::size_t k, const IpKnnOptions& opt = {});
/// Same search over binary diagnosis rows (inner product = shared codes).
TypedEdgeList approx_ip_knn(const DiagnosisMatrix& d, std::size_t k);

/// Top-k by s_ij = c_ij^2 / (|D_i| |D_j|), c_ij = shared code count.
TypedEdgeList penalized_cooccurrence_knn(const DiagnosisMatrix& d, std::size_t k);

/// Kernel bandwidth: median pairwise Euclidean distance / sqrt(2). Falls
/// back to 1 (with a warning) when every row is identical.
double kernel_sigma(const EmbeddingMatrix& b);

/// Top-k by w_ij = exp(-||b_i - b_j||^2 / (2 sigma^2)), type 1 edges.
TypedEdgeList embedding_kernel_knn(const EmbeddingMatrix& b, std::size_t k);

// -- post-processing -------------------------------------------------------------

enum class NormScheme { log1p, zscore };

/// Transforms weights, then removes the floor(prune_frac * |E|) edges with
/// the smallest transformed weight.
TypedEdgeList normalize_prune(const TypedEdgeList& e, NormScheme scheme, double prune_frac = 0.30);

/// Multiset union of two views; parallel edges of distinct types survive.
TypedEdgeList fuse_views(const TypedEdgeList& diag, const TypedEdgeList& bert);

/// Connected components of the undirected view; label per node, labels are
/// assigned in order of each component's smallest node.
std::vector<std::uint32_t> component_labels(const TypedEdgeList& e, std::size_t* count = nullptr);
std::size_t count_components(const TypedEdgeList& e);

/// Adds C-1 bridge pairs (type 2, both directions) following the minimum
/// spanning tree over component centroids in embedding space.
TypedEdgeList mst_bridge(const TypedEdgeList& e, const EmbeddingMatrix& b);

/// Personalized PageRank from `seed` over the row-normalized undirected
/// adjacency (dangling nodes keep their mass), by power iteration.
std::vector<double> ppr_scores(const TypedEdgeList& e, std::uint32_t seed, double teleport,
                               double tol = 1e-8);

/// Adds per node the top_k highest-PPR non-neighbours as type 3 edges.
TypedEdgeList gdc_ppr(const TypedEdgeList& e, double teleport = 0.15, std::size_t top_k = 2,
                      double tol = 1e-8);

/// Enforces out-degree <= max_out with per-type quotas (largest remainder,
/// remainder ties by seeded order) and by descending weight within a type.
TypedEdgeList degree_cap_stratified(const TypedEdgeList& e, std::size_t max_out,
                                    std::uint64_t seed);

/// Largest-remainder allocation of `budget` slots over `counts`.
std::vector<std::size_t> stratified_quotas(std::span<const std::size_t> counts, std::size_t budget,
                                           std::uint64_t tie_seed);

/// edge_count / (n (n-1) / 2).
double graph_density(std::size_t edge_count, std::size_t n);

// -- full pipeline ------------------------------------------------------------------

enum class DiagMethod { tfidf, ip, cooc };
enum class Rewire { none, mst, gdc };

struct GraphBuildConfig {
  DiagMethod diag_method = DiagMethod::ip;
  std::size_t k_diag = 3;
  std::size_t k_bert = 1;
  Rewire rewire = Rewire::mst;
  NormScheme norm = NormScheme::log1p;
  double prune_frac = 0.30;
  std::size_t max_out = 15;
  double ppr_teleport = 0.15;
  std::size_t ppr_top_k = 2;
  std::uint64_t seed = 0;
};

/// Per-view similarity, per-view normalize+prune, typed fusion, optional
/// rewiring, then degree capping.
TypedEdgeList build_graph(const DiagnosisMatrix& d, const EmbeddingMatrix& b,
                          const GraphBuildConfig& cfg);

DiagMethod parse_diag_method(const std::string& s);
Rewire parse_rewire(const std::string& s);
NormScheme parse_norm(const std::string& s);
std::string to_string(DiagMethod m);
std::string to_string(Rewire r);
std::string to_string(NormScheme n);

// -- file formats -------------------------------------------------------------------

/// `row col 1` triplets; '#' lines are comments, and an optional
/// `# rows=N cols=D` header fixes the matrix size.
DiagnosisMatrix read_diagnosis_triplets(const std::filesystem::path& path);
void write_diagnosis_triplets(const std::filesystem::path& path, const DiagnosisMatrix& d);

/// float32 array file with an (N, dim) header.
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& b);

/// Summary line `nodes=N edges=E density=D components=C` followed by one
/// `src\tdst\tweight\ttype` line per edge.
void write_edge_list(const std::filesystem::path& path, const TypedEdgeList& e);
TypedEdgeList read_edge_list(const std::filesystem::path& path);
std::string summary_line(const TypedEdgeList& e);

}  // namespace s2g::graph
