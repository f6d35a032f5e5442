#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "s2g/core/io.hpp"
#include "s2g/graph/graph_builder.hpp"

namespace s2g::graph {

namespace {

template <typename T>
T parse_number(std::string_view tok, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw DataError(where + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

TypedEdgeList build_graph(const DiagnosisMatrix& d, const EmbeddingMatrix& b, const GraphBuildConfig& cfg) {
  if (d.row_count() != b.rows) {
    throw DataError("diagnosis rows (" + std::to_string(d.row_count()) + ") != embedding rows (" +
                    std::to_string(b.rows) + ")");
  }
  TypedEdgeList diag;
  switch (cfg.diag_method) {
    case DiagMethod::tfidf: diag = tfidf_cosine_knn(d, cfg.k_diag); break;
    case DiagMethod::ip: diag = approx_ip_knn(d, cfg.k_diag); break;
    case DiagMethod::cooc: diag = penalized_cooccurrence_knn(d, cfg.k_diag); break;
  }
  TypedEdgeList bert = embedding_kernel_knn(b, cfg.k_bert);
  diag = normalize_prune(diag, cfg.norm, cfg.prune_frac);
  bert = normalize_prune(bert, cfg.norm, cfg.prune_frac);
  TypedEdgeList g = fuse_views(diag, bert);
  if (cfg.rewire == Rewire::mst) g = mst_bridge(g, b);
  if (cfg.rewire == Rewire::gdc) g = gdc_ppr(g, cfg.ppr_teleport, cfg.ppr_top_k);
  return degree_cap_stratified(g, cfg.max_out, cfg.seed);
}

DiagMethod parse_diag_method(const std::string& s) {
  if (s == "tfidf") return DiagMethod::tfidf;
  if (s == "ip") return DiagMethod::ip;
  if (s == "cooc") return DiagMethod::cooc;
  throw std::invalid_argument("unknown diagnosis method '" + s + "' (tfidf, ip, cooc)");
}

Rewire parse_rewire(const std::string& s) {
  if (s == "none") return Rewire::none;
  if (s == "mst") return Rewire::mst;
  if (s == "gdc") return Rewire::gdc;
  throw std::invalid_argument("unknown rewiring '" + s + "' (none, mst, gdc)");
}

NormScheme parse_norm(const std::string& s) {
  if (s == "log1p") return NormScheme::log1p;
  if (s == "zscore") return NormScheme::zscore;
  throw std::invalid_argument("unknown normalization '" + s + "' (log1p, zscore)");
}

std::string to_string(DiagMethod m) {
  switch (m) {
    case DiagMethod::tfidf: return "tfidf";
    case DiagMethod::ip: return "ip";
    case DiagMethod::cooc: return "cooc";
  }
  return "?";
}

std::string to_string(Rewire r) {
  switch (r) {
    case Rewire::none: return "none";
    case Rewire::mst: return "mst";
    case Rewire::gdc: return "gdc";
  }
  return "?";
}

std::string to_string(NormScheme n) { return n == NormScheme::log1p ? "log1p" : "zscore"; }

DiagnosisMatrix read_diagnosis_triplets(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::uint32_t>> rows;
  std::size_t cols = 0;
  std::size_t declared_rows = 0;
  bool has_header = false;
  std::string line;
  std::size_t lineno = 0;
  const std::string name = path.filename().string();
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = name + ":" + std::to_string(lineno);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0].front() == '#') {
      // `# rows=N cols=D`
      for (auto t : tok) {
        if (t.rfind("rows=", 0) == 0) {
          declared_rows = parse_number<std::size_t>(t.substr(5), where);
          has_header = true;
        } else if (t.rfind("cols=", 0) == 0) {
          cols = std::max(cols, parse_number<std::size_t>(t.substr(5), where));
        }
      }
      continue;
    }
    if (tok.size() != 3) throw DataError(where + ": expected 'row col 1'");
    const auto r = parse_number<std::uint32_t>(tok[0], where);
    const auto c = parse_number<std::uint32_t>(tok[1], where);
    const auto v = parse_number<double>(tok[2], where);
    if (v != 1.0) throw DataError(where + ": diagnosis entries must be 1");
    if (has_header && r >= declared_rows) throw DataError(where + ": row exceeds declared rows");
    if (r >= rows.size()) rows.resize(r + 1);
    rows[r].push_back(c);
    cols = std::max<std::size_t>(cols, c + 1);
  }
  if (has_header) rows.resize(std::max(rows.size(), declared_rows));
  return DiagnosisMatrix::from_rows(std::move(rows), cols);
}

void write_diagnosis_triplets(const std::filesystem::path& path, const DiagnosisMatrix& d) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "# rows=" << d.row_count() << " cols=" << d.cols << '\n';
  for (std::size_t i = 0; i < d.row_count(); ++i) {
    for (std::uint32_t c : d.rows[i]) os << i << ' ' << c << " 1\n";
  }
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  auto arr = read_f32_array(path);
  EmbeddingMatrix b;
  b.rows = arr.count;
  b.dim = arr.dim;
  b.data.assign(arr.values.begin(), arr.values.end());
  for (double v : b.data) {
    if (!std::isfinite(v)) throw DataError(path.filename().string() + ": non-finite embedding value");
  }
  return b;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& b) {
  std::vector<float> f(b.data.begin(), b.data.end());
  write_f32_array(path, static_cast<std::uint32_t>(b.rows), static_cast<std::uint32_t>(b.dim), f);
}

std::string summary_line(const TypedEdgeList& e) {
  std::ostringstream os;
  os << "nodes=" << e.node_count << " edges=" << e.edges.size() << " density="
     << (e.node_count >= 2 ? format_double(graph_density(e.edges.size(), e.node_count)) : "0")
     << " components=" << count_components(e);
  return os.str();
}

void write_edge_list(const std::filesystem::path& path, const TypedEdgeList& e) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << summary_line(e) << '\n';
  for (const Edge& ed : e.edges) {
    os << ed.src << '\t' << ed.dst << '\t' << format_double(ed.weight) << '\t'
       << static_cast<int>(ed.type) << '\n';
  }
  if (!os) throw DataError("write failed: " + path.string());
}

TypedEdgeList read_edge_list(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  const std::string name = path.filename().string();
  std::string line;
  if (!std::getline(is, line)) throw DataError(name + ": empty edge list");
  TypedEdgeList e;
  bool have_nodes = false;
  for (auto t : split_ws(line)) {
    if (t.rfind("nodes=", 0) == 0) {
      e.node_count = parse_number<std::size_t>(t.substr(6), name + ":1");
      have_nodes = true;
    }
  }
  if (!have_nodes) throw DataError(name + ":1: missing nodes= in summary line");
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = name + ":" + std::to_string(lineno);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4) throw DataError(where + ": expected 'src dst weight type'");
    Edge ed;
    ed.src = parse_number<std::uint32_t>(tok[0], where);
    ed.dst = parse_number<std::uint32_t>(tok[1], where);
    ed.weight = parse_number<double>(tok[2], where);
    const auto type = parse_number<unsigned>(tok[3], where);
    if (type >= kEdgeTypeCount) throw DataError(where + ": edge type must be 0..3");
    ed.type = static_cast<EdgeType>(type);
    e.edges.push_back(ed);
  }
  try {
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw DataError(name + ": " + ex.what());
  }
  return e;
}

}  // namespace s2g::graph
