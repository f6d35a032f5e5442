#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "s2g/cli/harness.hpp"

namespace s2g::harness {

namespace {

std::vector<std::uint32_t> as_u32(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

model::Model init_model(const RunConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 21));
  return model::Model::init(cfg.model, rng);
}

namespace {

std::vector<Tensor> snapshot(model::Model& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.var.value());
  for (Tensor* b : m.buffers()) out.push_back(*b);
  return out;
}

void restore(model::Model& m, const std::vector<Tensor>& s) {
  std::size_t i = 0;
  for (auto& p : m.parameters()) p.var.mutable_value() = s.at(i++);
  for (Tensor* b : m.buffers()) *b = s.at(i++);
}

}  // namespace

Prepared prepare(const data::Cohort& c, std::size_t window_hours, const std::vector<std::string>& drop_groups) {
  c.validate();
  if (window_hours == 0 || window_hours > c.steps) throw std::invalid_argument("prepare: window outside [1, steps]");
  const std::size_t n = c.n, T = c.steps, d = c.d_ts;
  std::vector<std::uint8_t> mask = c.mask;
  const std::size_t first = T - window_hours;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(i * T * d), first * d, std::uint8_t{0});
  }
  const auto imp = data::impute_forward_fill(c.ts, mask, n, T, d);

  Prepared p;
  p.n = n;
  p.steps = T;
  p.d_in = 2 * d;
  p.d_flat = c.d_flat;
  p.ts = Tensor({n, T, p.d_in});
  p.step_mask = Tensor({n, T});
  for (std::size_t i = 0; i < n; ++i) {
    bool any_step = false;
    for (std::size_t t = 0; t < T; ++t) {
      bool seen = false;
      for (std::size_t ch = 0; ch < d; ++ch) {
        const std::size_t at = (i * T + t) * d + ch;
        p.ts[(i * T + t) * p.d_in + ch] = imp.values[at];
        p.ts[(i * T + t) * p.d_in + d + ch] = imp.decay[at];
        seen = seen || mask[at];
      }
      p.step_mask[i * T + t] = seen ? 1.0 : 0.0;
      any_step = any_step || seen;
    }
    // A stay with nothing left inside the window pools its final step.
    if (!any_step) p.step_mask[i * T + T - 1] = 1.0;
  }
  p.flat = Tensor({n, c.d_flat});
  for (std::size_t k = 0; k < c.flat.size(); ++k) p.flat[k] = c.flat[k];
  for (const auto& name : drop_groups) {
    const auto& g = c.group(name);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = g.begin; j < g.end; ++j) p.flat.at(i, j) = 0.0;
    }
  }
  p.y.assign(c.labels.begin(), c.labels.end());
  return p;
}

graph::TypedEdgeList drop_edges(const graph::TypedEdgeList& e, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw std::invalid_argument("drop_edges: fraction must lie in [0, 1)");
  if (fraction == 0.0) return e;
  const auto drop = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(e.size())));
  std::vector<std::size_t> idx(e.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<bool> removed(e.size(), false);
  for (std::size_t k = 0; k < drop; ++k) removed[idx[k]] = true;
  graph::TypedEdgeList out;
  out.node_count = e.node_count;
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (!removed[k]) out.edges.push_back(e.edges[k]);
  }
  return out;
}

model::ModelInputs gather_inputs(const Prepared& d, const std::vector<std::uint32_t>& nodes, std::size_t targets,
                                 graph::TypedEdgeList edges, std::uint64_t noise_seed) {
  const std::size_t m = nodes.size(), row = d.steps * d.d_in;
  model::ModelInputs in;
  in.ts.values = Tensor({m, d.steps, d.d_in});
  in.ts.mask = Tensor({m, d.steps});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t g = nodes[i];
    std::copy_n(d.ts.ptr() + g * row, row, in.ts.values.ptr() + i * row);
    std::copy_n(d.step_mask.ptr() + g * d.steps, d.steps, in.ts.mask.ptr() + i * d.steps);
  }
  in.x_flat = Tensor({targets, d.d_flat});
  for (std::size_t i = 0; i < targets; ++i) {
    std::copy_n(d.flat.ptr() + nodes[i] * d.d_flat, d.d_flat, in.x_flat.ptr() + i * d.d_flat);
  }
  in.edges = std::move(edges);
  in.target_count = targets;
  in.noise_seed = noise_seed;
  return in;
}

std::vector<double> predict(model::Model& m, const Prepared& d, const graph::TypedEdgeList& edges,
                            const std::vector<std::size_t>& rows, std::uint64_t noise_seed) {
  if (rows.empty()) return {};
  // Targets first, then every other node as graph context.
  std::vector<std::uint32_t> nodes = as_u32(rows);
  graph::TypedEdgeList local;
  if (m.cfg.use_graph) {
    std::vector<std::uint32_t> to_local(d.n, UINT32_MAX);
    for (std::size_t i = 0; i < rows.size(); ++i) to_local[rows[i]] = static_cast<std::uint32_t>(i);
    for (std::uint32_t v = 0; v < d.n; ++v) {
      if (to_local[v] == UINT32_MAX) {
        to_local[v] = static_cast<std::uint32_t>(nodes.size());
        nodes.push_back(v);
      }
    }
    for (const auto& e : edges.edges) local.edges.push_back({to_local[e.src], to_local[e.dst], e.weight, e.type});
  }
  local.node_count = nodes.size();
  Rng rng(0);
  const auto out = m.forward(gather_inputs(d, nodes, rows.size(), std::move(local), noise_seed), rng, false);
  return model::predict_days(out);
}

eval::MetricReport evaluate_rows(model::Model& m, const Prepared& d, const graph::TypedEdgeList& edges,
                                 const std::vector<std::size_t>& rows, std::uint64_t noise_seed) {
  const auto pred = predict(m, d, edges, rows, noise_seed);
  std::vector<double> truth(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) truth[i] = d.y[rows[i]];
  return eval::evaluate(truth, pred);
}

std::uint64_t eval_noise_seed(const RunConfig& cfg) { return mix_seed(cfg.seed, 7); }

std::vector<std::size_t> split_rows(const RunConfig& cfg, std::size_t n, const std::string& split) {
  auto s = data::split_patients(n, cfg.seed);
  if (split == "train") return s.train;
  if (split == "val") return s.val;
  if (split == "test") return s.test;
  throw std::invalid_argument("unknown split '" + split + "' (expected train, val or test)");
}

namespace {

void check_dims(const model::Model& m, const data::Cohort& c) {
  if (m.cfg.d_ts_in != 2 * c.d_ts || m.cfg.d_flat != c.d_flat) {
    throw DataError("model expects d_ts_in=" + std::to_string(m.cfg.d_ts_in) + ", d_flat=" +
                    std::to_string(m.cfg.d_flat) + " but the cohort gives " + std::to_string(2 * c.d_ts) + ", " +
                    std::to_string(c.d_flat));
  }
}

}  // namespace

eval::MetricReport evaluate_split(model::Model& m, const RunConfig& cfg, const data::Cohort& cohort,
                                  const graph::TypedEdgeList& edges, const std::string& split) {
  check_dims(m, cohort);
  if (edges.node_count != cohort.n) throw DataError("graph and cohort sizes differ");
  const auto rows = split_rows(cfg, cohort.n, split);
  if (rows.empty()) throw DataError("split '" + split + "' is empty");
  const Prepared d = prepare(cohort, cfg.window_hours, cfg.drop_groups);
  return evaluate_rows(m, d, drop_edges(edges, cfg.edge_dropout, mix_seed(cfg.seed, 11)), rows,
                       eval_noise_seed(cfg));
}

RunRecord reevaluate(model::Model& m, const RunRecord& base, const RunConfig& variant, const data::Cohort& cohort,
                     const graph::TypedEdgeList& edges) {
  check_dims(m, cohort);
  RunRecord r = base;
  r.config.window_hours = variant.window_hours;
  r.config.drop_groups = variant.drop_groups;
  r.config.edge_dropout = variant.edge_dropout;
  const Prepared d = prepare(cohort, r.config.window_hours, r.config.drop_groups);
  const auto e = drop_edges(edges, r.config.edge_dropout, mix_seed(r.config.seed, 11));
  const auto split = data::split_patients(cohort.n, r.config.seed);
  r.val = evaluate_rows(m, d, e, split.val, eval_noise_seed(r.config));
  r.test_true.clear();
  for (std::size_t i : split.test) r.test_true.push_back(d.y[i]);
  r.test_pred = predict(m, d, e, split.test, eval_noise_seed(r.config));
  if (!split.test.empty()) r.test = eval::evaluate(r.test_true, r.test_pred);
  r.seconds = 0.0;
  return r;
}

TrainResult train(const RunConfig& cfg_in, const data::Cohort& cohort, const graph::TypedEdgeList& full_edges,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  if (full_edges.node_count != cohort.n) throw DataError("graph has " + std::to_string(full_edges.node_count) +
                                                         " nodes but the cohort has " + std::to_string(cohort.n));
  RunConfig cfg = cfg_in;
  cfg.model.d_ts_in = 2 * cohort.d_ts;
  cfg.model.d_flat = cohort.d_flat;
  const Prepared d = prepare(cohort, cfg.window_hours, cfg.drop_groups);
  const graph::TypedEdgeList edges = drop_edges(full_edges, cfg.edge_dropout, mix_seed(cfg.seed, 11));
  const data::Split split = data::split_patients(cohort.n, cfg.seed);
  if (split.train.empty() || split.val.empty()) throw DataError("train: cohort too small for a validation split");

  TrainResult res{init_model(cfg), {}};
  model::Model& m = res.model;
  RunRecord& rec = res.record;
  rec.config = cfg;
  rec.parameters = nn::count_parameters(m.parameters());

  std::vector<ad::Var> params;
  for (const auto& p : m.parameters()) params.push_back(p.var);
  AdamWState opt_state;
  AdamWOptions opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip;

  double best_r2 = -std::numeric_limits<double>::infinity();
  std::vector<Tensor> best = snapshot(m);
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 1000 + epoch));
    shuffle_rng.shuffle(order);
    Rng drop_rng(mix_seed(cfg.seed, 3000 + epoch));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      ++step;
      const std::vector<std::uint32_t> seeds(order.begin() + static_cast<std::ptrdiff_t>(b),
                                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + cfg.batch_size)));
      std::vector<double> y(seeds.size());
      for (std::size_t i = 0; i < seeds.size(); ++i) y[i] = d.y[seeds[i]];
      model::ModelInputs in;
      if (cfg.model.use_graph) {
        auto sg = graph::sample_neighborhood(edges, seeds, cfg.fanouts, mix_seed(cfg.seed, 2000000 + step));
        in = gather_inputs(d, sg.nodes, sg.seed_count, std::move(sg.edges), mix_seed(cfg.seed, 4000000 + step));
      } else {
        graph::TypedEdgeList none;
        none.node_count = seeds.size();
        in = gather_inputs(d, seeds, seeds.size(), std::move(none), 0);
      }
      const auto out = m.forward(in, drop_rng, true);
      const ad::Var loss = m.loss(out, y, cfg.loss);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      ad::backward(loss);
      optimize_step(params, opt_state, opt);
      loss_sum += lv;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, batches));
    log.val_r2 = evaluate_rows(m, d, edges, split.val, eval_noise_seed(cfg)).r2;
    rec.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_r2 > best_r2) {
      best_r2 = log.val_r2;
      best = snapshot(m);
      rec.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      spdlog::info("early stop at epoch {} (best {})", epoch, rec.best_epoch);
      break;
    }
  }
  restore(m, best);
  rec.val = evaluate_rows(m, d, edges, split.val, eval_noise_seed(cfg));
  if (!split.test.empty()) {
    rec.test_pred = predict(m, d, edges, split.test, eval_noise_seed(cfg));
    for (std::size_t i : split.test) rec.test_true.push_back(d.y[i]);
    rec.test = eval::evaluate(rec.test_true, rec.test_pred);
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.record = rec;
  return res;
}

// -- checkpoints -------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'S', '2', 'G', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint: truncated " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, model::Model& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kCkptMagic, sizeof kCkptMagic);
  const std::string text = config_text(cfg);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto tensors = snapshot(m);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t k : t.shape()) put<std::uint64_t>(os, k);
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw DataError("failed writing " + path.string());
}

model::Model load_checkpoint(const std::filesystem::path& path, RunConfig* cfg_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0) throw DataError("checkpoint: bad magic");
  const auto len = get<std::uint32_t>(is, "config length");
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw DataError("checkpoint: truncated config");
  const RunConfig cfg = config_from_key_values(parse_key_values(text, path.string()));
  model::Model m = init_model(cfg);
  auto tensors = snapshot(m);
  const auto count = get<std::uint32_t>(is, "tensor count");
  if (count != tensors.size()) throw DataError("checkpoint: tensor count does not match the stored config");
  for (Tensor& t : tensors) {
    const auto rank = get<std::uint32_t>(is, "tensor rank");
    Shape shape(rank);
    for (auto& k : shape) k = get<std::uint64_t>(is, "tensor shape");
    if (shape != t.shape()) throw DataError("checkpoint: tensor shape " + shape_str(shape) + " != " + shape_str(t.shape()));
    if (!is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw DataError("checkpoint: truncated tensor data");
    }
  }
  restore(m, tensors);
  if (cfg_out) *cfg_out = cfg;
  return m;
}

}  // namespace s2g::harness
