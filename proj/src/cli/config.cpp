#include <sstream>
#include <stdexcept>

#include "s2g/cli/harness.hpp"

namespace s2g::harness {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    x = std::stoull(v, &pos);
  } catch (const std::logic_error&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw std::invalid_argument("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::logic_error&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

KeyValues to_key_values(const RunConfig& c) {
  KeyValues kv;
  const auto& m = c.model;
  kv["d_ts_in"] = std::to_string(m.d_ts_in);
  kv["d_flat"] = std::to_string(m.d_flat);
  kv["d_model"] = std::to_string(m.d_model);
  kv["d_state"] = std::to_string(m.d_state);
  kv["ts_layers"] = std::to_string(m.ts_layers);
  kv["ts_dropout"] = format_double(m.ts_dropout);
  kv["pool"] = temporal::to_string(m.pool);
  kv["gps_layers"] = std::to_string(m.gps_layers);
  kv["gps_dropout"] = format_double(m.gps_dropout);
  kv["d_edge"] = std::to_string(m.d_edge);
  kv["bn_momentum"] = format_double(m.bn_momentum);
  kv["flat_dropout"] = format_double(m.flat_dropout);
  kv["fusion_logit"] = format_double(m.fusion_graph_logit);
  kv["use_graph"] = m.use_graph ? "true" : "false";
  kv["use_ts"] = m.use_ts ? "true" : "false";
  kv["use_static"] = m.use_static ? "true" : "false";
  kv["alpha"] = format_double(c.loss.alpha);
  kv["gamma"] = format_double(c.loss.gamma);
  kv["tau"] = format_double(c.loss.tau);
  kv["huber_delta"] = format_double(c.loss.delta);
  kv["diag_method"] = graph::to_string(c.graph.diag_method);
  kv["k_diag"] = std::to_string(c.graph.k_diag);
  kv["k_bert"] = std::to_string(c.graph.k_bert);
  kv["rewire"] = graph::to_string(c.graph.rewire);
  kv["norm"] = graph::to_string(c.graph.norm);
  kv["prune_frac"] = format_double(c.graph.prune_frac);
  kv["max_out"] = std::to_string(c.graph.max_out);
  kv["ppr_teleport"] = format_double(c.graph.ppr_teleport);
  kv["ppr_top_k"] = std::to_string(c.graph.ppr_top_k);
  kv["graph_seed"] = std::to_string(c.graph.seed);
  kv["lr"] = format_double(c.lr);
  kv["weight_decay"] = format_double(c.weight_decay);
  kv["clip"] = format_double(c.clip);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["fanouts"] = join(c.fanouts);
  kv["max_epochs"] = std::to_string(c.max_epochs);
  kv["patience"] = std::to_string(c.patience);
  kv["seed"] = std::to_string(c.seed);
  kv["window_hours"] = std::to_string(c.window_hours);
  kv["drop_groups"] = join(c.drop_groups);
  kv["edge_dropout"] = format_double(c.edge_dropout);
  return kv;
}

RunConfig config_from_key_values(const KeyValues& kv, RunConfig c) {
  auto& m = c.model;
  for (const auto& [k, v] : kv) {
    if (k == "d_ts_in") m.d_ts_in = to_size(k, v);
    else if (k == "d_flat") m.d_flat = to_size(k, v);
    else if (k == "d_model") m.d_model = to_size(k, v);
    else if (k == "d_state") m.d_state = to_size(k, v);
    else if (k == "ts_layers") m.ts_layers = to_size(k, v);
    else if (k == "ts_dropout") m.ts_dropout = to_double(k, v);
    else if (k == "pool") m.pool = temporal::parse_pool_mode(v);
    else if (k == "gps_layers") m.gps_layers = to_size(k, v);
    else if (k == "gps_dropout") m.gps_dropout = to_double(k, v);
    else if (k == "d_edge") m.d_edge = to_size(k, v);
    else if (k == "bn_momentum") m.bn_momentum = to_double(k, v);
    else if (k == "flat_dropout") m.flat_dropout = to_double(k, v);
    else if (k == "fusion_logit") m.fusion_graph_logit = to_double(k, v);
    else if (k == "use_graph") m.use_graph = to_bool(k, v);
    else if (k == "use_ts") m.use_ts = to_bool(k, v);
    else if (k == "use_static") m.use_static = to_bool(k, v);
    else if (k == "alpha") c.loss.alpha = to_double(k, v);
    else if (k == "gamma") c.loss.gamma = to_double(k, v);
    else if (k == "tau") c.loss.tau = to_double(k, v);
    else if (k == "huber_delta") c.loss.delta = to_double(k, v);
    else if (k == "diag_method") c.graph.diag_method = graph::parse_diag_method(v);
    else if (k == "k_diag") c.graph.k_diag = to_size(k, v);
    else if (k == "k_bert") c.graph.k_bert = to_size(k, v);
    else if (k == "rewire") c.graph.rewire = graph::parse_rewire(v);
    else if (k == "norm") c.graph.norm = graph::parse_norm(v);
    else if (k == "prune_frac") c.graph.prune_frac = to_double(k, v);
    else if (k == "max_out") c.graph.max_out = to_size(k, v);
    else if (k == "ppr_teleport") c.graph.ppr_teleport = to_double(k, v);
    else if (k == "ppr_top_k") c.graph.ppr_top_k = to_size(k, v);
    else if (k == "graph_seed") c.graph.seed = to_size(k, v);
    else if (k == "lr") c.lr = to_double(k, v);
    else if (k == "weight_decay") c.weight_decay = to_double(k, v);
    else if (k == "clip") c.clip = to_double(k, v);
    else if (k == "batch_size") c.batch_size = to_size(k, v);
    else if (k == "fanouts") {
      c.fanouts.clear();
      for (const auto& f : split_list(v)) c.fanouts.push_back(to_size(k, f));
    } else if (k == "max_epochs") c.max_epochs = to_size(k, v);
    else if (k == "patience") c.patience = to_size(k, v);
    else if (k == "seed") c.seed = to_size(k, v);
    else if (k == "window_hours") c.window_hours = to_size(k, v);
    else if (k == "drop_groups") c.drop_groups = split_list(v);
    else if (k == "edge_dropout") c.edge_dropout = to_double(k, v);
    else throw std::invalid_argument("config: unknown key '" + k + "'");
  }
  if (c.batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
  if (c.max_epochs == 0) throw std::invalid_argument("config: max_epochs must be >= 1");
  if (c.window_hours == 0 || c.window_hours > data::kSteps) {
    throw std::invalid_argument("config: window_hours must lie in [1, " + std::to_string(data::kSteps) + "]");
  }
  if (c.edge_dropout < 0.0 || c.edge_dropout >= 1.0) throw std::invalid_argument("config: edge_dropout must lie in [0, 1)");
  if (c.lr < 0.0) throw std::invalid_argument("config: lr must be >= 0");
  return c;
}

std::string config_text(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& [k, v] : to_key_values(c)) os << k << '=' << v << '\n';
  return os.str();
}

}  // namespace s2g::harness
