// s2g: graph building, synthetic cohorts, training, evaluation, ablations,
// random search and reports. Exit codes: 0 ok, 2 bad arguments, 3 data
// error, 4 numerical divergence.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "s2g/cli/harness.hpp"

using namespace s2g;
using harness::RunConfig;

namespace {

constexpr int kBadArgs = 2;
constexpr int kDataError = 3;
constexpr int kDiverged = 4;

// Options shared by the commands that load a run config.
struct ConfigOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
};

void add_config_opts(CLI::App* cmd, ConfigOpts& o) {
  cmd->add_option("--config", o.config_path, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override one config key (key=value); repeatable");
  cmd->add_option("--seed", o.seed, "run seed (overrides the config)");
}

RunConfig load_config(const ConfigOpts& o, const CLI::App* cmd) {
  RunConfig c;
  if (!o.config_path.empty()) c = harness::config_from_key_values(read_key_values(o.config_path), c);
  std::string text;
  for (const auto& kv : o.overrides) text += kv + "\n";
  if (!text.empty()) c = harness::config_from_key_values(parse_key_values(text, "--set"), c);
  if (cmd->count("--seed") > 0) c.seed = o.seed;
  return c;
}

graph::TypedEdgeList load_graph(const std::string& path, const data::Cohort& c) {
  auto g = graph::read_edge_list(path);
  if (g.node_count != c.n) {
    throw DataError(path + ": graph has " + std::to_string(g.node_count) + " nodes, cohort has " +
                    std::to_string(c.n));
  }
  return g;
}

void log_epoch(const harness::EpochLog& e) {
  spdlog::info("epoch {:3d}  loss {:.5f}  val R2 {:.4f}", e.epoch, e.train_loss, e.val_r2);
}

std::vector<std::size_t> seed_list(std::uint64_t first, std::size_t count) {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < count; ++i) s.push_back(first + i);
  return s;
}

// -- build-graph --------------------------------------------------------------------

struct GraphOpts {
  std::string cohort, codes, emb, out;
  std::string diag_method, rewire, norm, config_path;
  std::size_t k_diag = 0, k_bert = 0;
  std::uint64_t seed = 0;
};

int cmd_build_graph(const GraphOpts& o, const CLI::App* cmd) {
  RunConfig rc;
  if (!o.config_path.empty()) rc = harness::config_from_key_values(read_key_values(o.config_path), rc);
  auto g = rc.graph;
  if (cmd->count("--diag-method")) g.diag_method = graph::parse_diag_method(o.diag_method);
  if (cmd->count("--rewire")) g.rewire = graph::parse_rewire(o.rewire);
  if (cmd->count("--norm")) g.norm = graph::parse_norm(o.norm);
  if (cmd->count("--k-diag")) g.k_diag = o.k_diag;
  if (cmd->count("--k-bert")) g.k_bert = o.k_bert;
  if (cmd->count("--seed")) g.seed = o.seed;

  graph::DiagnosisMatrix d;
  graph::EmbeddingMatrix b;
  if (!o.cohort.empty()) {
    auto c = data::read_cohort(o.cohort);
    d = std::move(c.codes);
    b = std::move(c.emb);
  } else {
    if (o.codes.empty() || o.emb.empty()) throw std::invalid_argument("build-graph: give --cohort or both --codes and --emb");
    d = graph::read_diagnosis_triplets(o.codes);
    b = graph::read_embeddings(o.emb);
  }
  const auto e = graph::build_graph(d, b, g);
  graph::write_edge_list(o.out, e);
  std::cout << graph::summary_line(e) << '\n';
  return 0;
}

// -- synth ----------------------------------------------------------------------------

int cmd_synth(const data::SynthConfig& s, const std::string& out) {
  const auto c = data::generate_cohort(s);
  data::write_cohort(out, c);
  std::cout << "wrote " << c.n << " stays to " << out << '\n';
  return 0;
}

// -- train / evaluate -------------------------------------------------------------

struct DataOpts {
  std::string cohort, graph, out;
};

int cmd_train(const DataOpts& io, const RunConfig& cfg) {
  const auto cohort = data::read_cohort(io.cohort);
  const auto edges = load_graph(io.graph, cohort);
  auto res = harness::train(cfg, cohort, edges, log_epoch);
  harness::write_run(io.out, res.record);
  harness::save_checkpoint(std::filesystem::path(io.out) / "model.ckpt", res.record.config, res.model);
  std::cout << "best epoch " << res.record.best_epoch << "\n" << eval::to_key_values(res.record.test);
  return 0;
}

struct EvalOpts {
  std::string checkpoint, cohort, graph, split = "test", out;
  std::uint64_t seed = 0;
};

int cmd_evaluate(const EvalOpts& o, const CLI::App* cmd) {
  RunConfig cfg;
  auto m = harness::load_checkpoint(o.checkpoint, &cfg);
  if (cmd->count("--seed")) cfg.seed = o.seed;
  const auto cohort = data::read_cohort(o.cohort);
  const auto edges = load_graph(o.graph, cohort);
  const auto report = harness::evaluate_split(m, cfg, cohort, edges, o.split);
  const auto text = eval::to_key_values(report);
  if (!o.out.empty()) {
    std::ofstream os(o.out, std::ios::binary);
    os << text;
    if (!os) throw DataError(o.out + ": cannot write");
  }
  std::cout << text;
  return 0;
}

// -- ablate ---------------------------------------------------------------------------

struct AblateOpts {
  std::string kind, mode = "retrain";
  std::vector<std::string> values;
  std::size_t n_seeds = 3;
};

std::vector<std::pair<std::string, RunConfig>> ablation_variants(const AblateOpts& o, const RunConfig& base,
                                                                  const data::Cohort& cohort) {
  std::vector<std::pair<std::string, RunConfig>> out;
  auto vals = o.values;
  if (o.kind == "window") {
    if (vals.empty()) vals = {"6", "24"};
    for (const auto& v : vals) {
      auto c = harness::config_from_key_values({{"window_hours", v}}, base);
      out.push_back({"window_" + v + "h", c});
    }
  } else if (o.kind == "features") {
    if (vals.empty()) {
      for (const auto& g : cohort.static_groups) vals.push_back(g.name);
    }
    for (const auto& v : vals) {
      (void)cohort.group(v);  // unknown names fail here, listing the valid ones
      auto c = base;
      c.drop_groups = {v};
      out.push_back({"drop_" + v, c});
    }
  } else if (o.kind == "modality") {
    if (vals.empty()) vals = {"no-static", "static-only"};
    for (const auto& v : vals) {
      auto c = base;
      if (v == "no-static") {
        c.model.use_static = false;
      } else if (v == "static-only") {
        c.model.use_graph = false;
        c.model.use_ts = false;
      } else if (v == "no-graph") {
        c.model.use_graph = false;
      } else if (v == "no-ts") {
        c.model.use_ts = false;
      } else {
        throw std::invalid_argument("ablate: unknown modality '" + v +
                                    "' (expected no-static, static-only, no-graph or no-ts)");
      }
      out.push_back({v, c});
    }
  } else if (o.kind == "edges") {
    if (vals.empty()) vals = {"0.3", "0.5", "0.7"};
    for (const auto& v : vals) {
      auto c = harness::config_from_key_values({{"edge_dropout", v}}, base);
      out.push_back({"edges_" + v, c});
    }
  } else {
    throw std::invalid_argument("ablate: unknown kind '" + o.kind + "' (expected window, features, modality or edges)");
  }
  return out;
}

int cmd_ablate(const AblateOpts& o, const DataOpts& io, const RunConfig& base) {
  const auto cohort = data::read_cohort(io.cohort);
  const auto edges = load_graph(io.graph, cohort);
  const auto variants = ablation_variants(o, base, cohort);
  if (o.mode == "reevaluate" && o.kind == "modality") {
    throw std::invalid_argument("ablate: modality ablations change the model and need --mode retrain");
  }
  const std::filesystem::path root(io.out);
  for (std::size_t s : seed_list(base.seed, o.n_seeds)) {
    auto cfg = base;
    cfg.seed = s;
    spdlog::info("seed {}: baseline", s);
    auto res = harness::train(cfg, cohort, edges, log_epoch);
    harness::write_run(root / "baseline" / ("seed" + std::to_string(s)), res.record);
    for (auto [name, v] : variants) {
      v.seed = s;
      spdlog::info("seed {}: {}", s, name);
      const auto dir = root / name / ("seed" + std::to_string(s));
      if (o.mode == "reevaluate") {
        harness::write_run(dir, harness::reevaluate(res.model, res.record, v, cohort, edges));
      } else {
        harness::write_run(dir, harness::train(v, cohort, edges, log_epoch).record);
      }
    }
  }
  harness::write_report(root, root / "report");
  std::ifstream table(root / "report" / "ablation.tsv");
  std::cout << table.rdbuf();
  return 0;
}

// -- search ---------------------------------------------------------------------------

int cmd_search(std::size_t trials, const DataOpts& io, const RunConfig& base) {
  const auto cohort = data::read_cohort(io.cohort);
  const auto edges = load_graph(io.graph, cohort);
  const std::filesystem::path root(io.out);
  std::size_t t = 0;
  const auto res = harness::random_search(base, trials, base.seed, [&](const RunConfig& c) {
    spdlog::info("trial {}/{}: lr {:.3g} d_model {} batch {}", t + 1, trials, c.lr, c.model.d_model, c.batch_size);
    auto rec = harness::train(c, cohort, edges, log_epoch).record;
    char name[32];
    std::snprintf(name, sizeof name, "trial%03zu", t++);
    harness::write_run(root / name, rec);
    return rec;
  });

  std::ostringstream os;
  os << "trial\tval_rmse\tval_r2\ttest_r2\tlr\td_model\tts_layers\td_state\tts_dropout\tpool\tgps_layers\t"
        "gps_dropout\tfusion_logit\tbatch_size\tclip\tfanouts\n";
  for (std::size_t i = 0; i < res.trials.size(); ++i) {
    const auto& tr = res.trials[i];
    auto kv = harness::to_key_values(tr.config);
    os << i << '\t' << format_double(tr.val_rmse) << '\t' << format_double(tr.record.val.r2) << '\t'
       << format_double(tr.record.test.r2);
    for (const char* k : {"lr", "d_model", "ts_layers", "d_state", "ts_dropout", "pool", "gps_layers", "gps_dropout",
                          "fusion_logit", "batch_size", "clip", "fanouts"}) {
      os << '\t' << kv[k];
    }
    os << '\n';
  }
  std::ofstream(root / "trials.tsv", std::ios::binary) << os.str();
  std::ofstream(root / "best_rmse.txt", std::ios::binary) << harness::config_text(res.trials[res.best_rmse].config);
  std::ofstream(root / "best_r2.txt", std::ios::binary) << harness::config_text(res.trials[res.best_r2].config);
  std::cout << "best by validation RMSE: trial " << res.best_rmse << " (" << res.trials[res.best_rmse].val_rmse
            << ")\nbest by validation R2: trial " << res.best_r2 << " (" << res.trials[res.best_r2].record.val.r2
            << ")\n";
  return 0;
}

int cmd_report(const std::string& runs, const std::string& out) {
  for (const auto& p : harness::write_report(runs, out)) std::cout << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patient-graph and time-series length-of-stay models"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  GraphOpts gopt;
  auto* bg = app.add_subcommand("build-graph", "build the multi-view patient similarity graph");
  bg->add_option("--cohort", gopt.cohort, "cohort directory (codes.txt, emb.bin)");
  bg->add_option("--codes", gopt.codes, "diagnosis triplet file (row col 1)");
  bg->add_option("--emb", gopt.emb, "embedding array file");
  bg->add_option("-o,--out", gopt.out, "edge list output")->required();
  bg->add_option("--config", gopt.config_path, "key=value config file")->check(CLI::ExistingFile);
  bg->add_option("--diag-method", gopt.diag_method, "tfidf, ip or cooc");
  bg->add_option("--k-diag", gopt.k_diag, "neighbours per node in the diagnosis view");
  bg->add_option("--k-bert", gopt.k_bert, "neighbours per node in the embedding view");
  bg->add_option("--rewire", gopt.rewire, "none, mst or gdc");
  bg->add_option("--norm", gopt.norm, "log1p or zscore");
  bg->add_option("--seed", gopt.seed, "tie-break seed");

  data::SynthConfig scfg;
  std::string synth_out;
  auto* sy = app.add_subcommand("synth", "generate a synthetic cohort directory");
  sy->add_option("-o,--out", synth_out, "output directory")->required();
  sy->add_option("-n,--stays", scfg.n_stays, "number of stays")->capture_default_str();
  sy->add_option("--d-ts", scfg.d_ts, "time-series channels")->capture_default_str();
  sy->add_option("--d-flat", scfg.d_flat, "static features")->capture_default_str();
  sy->add_option("--d-codes", scfg.d_codes, "diagnosis vocabulary size")->capture_default_str();
  sy->add_option("--emb-dim", scfg.emb_dim, "note embedding width")->capture_default_str();
  sy->add_option("--phenotypes", scfg.phenotypes, "latent phenotypes")->capture_default_str();
  sy->add_option("--seed", scfg.seed, "generator seed")->capture_default_str();

  DataOpts io;
  ConfigOpts copt;
  auto add_data = [&](CLI::App* cmd, bool out_required) {
    cmd->add_option("--cohort", io.cohort, "cohort directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--graph", io.graph, "edge list file")->required()->check(CLI::ExistingFile);
    auto* o = cmd->add_option("-o,--out", io.out, "output directory");
    if (out_required) o->required();
  };

  auto* tr = app.add_subcommand("train", "train one model; writes a run directory and model.ckpt");
  add_data(tr, true);
  add_config_opts(tr, copt);

  EvalOpts eopt;
  auto* ev = app.add_subcommand("evaluate", "full-graph metrics of a checkpoint on one split");
  ev->add_option("--checkpoint", eopt.checkpoint, "model.ckpt from train")->required()->check(CLI::ExistingFile);
  ev->add_option("--cohort", eopt.cohort, "cohort directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--graph", eopt.graph, "edge list file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", eopt.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  ev->add_option("-o,--out", eopt.out, "also write the report here");
  ev->add_option("--seed", eopt.seed, "split seed (defaults to the checkpoint's)");

  AblateOpts aopt;
  auto* ab = app.add_subcommand("ablate", "baseline plus variants over consecutive seeds");
  ab->add_option("--kind", aopt.kind, "window, features, modality or edges")
      ->required()
      ->check(CLI::IsMember({"window", "features", "modality", "edges"}));
  ab->add_option("--values", aopt.values,
                 "window hours, group names, modality variants (no-static, static-only, no-graph, no-ts) or edge "
                 "fractions");
  ab->add_option("--mode", aopt.mode, "retrain or reevaluate the baseline")
      ->check(CLI::IsMember({"retrain", "reevaluate"}))
      ->capture_default_str();
  ab->add_option("--seeds", aopt.n_seeds, "number of seeds starting at --seed")->capture_default_str();
  add_data(ab, true);
  add_config_opts(ab, copt);

  std::size_t trials = 75;
  auto* se = app.add_subcommand("search", "seeded random hyperparameter search");
  se->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber)->capture_default_str();
  add_data(se, true);
  add_config_opts(se, copt);

  std::string runs_dir, report_out;
  std::uint64_t report_seed = 0;
  auto* rp = app.add_subcommand("report", "tables and SVG plots from run directories");
  rp->add_option("--runs", runs_dir, "directory holding run directories")->required();
  rp->add_option("-o,--out", report_out, "output directory")->required();
  rp->add_option("--seed", report_seed, "accepted for uniformity; reports use no randomness");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadArgs;
  }

  auto logger = spdlog::stderr_color_st("s2g");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%H:%M:%S %^%l%$ %v");
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*bg) return cmd_build_graph(gopt, bg);
    if (*sy) return cmd_synth(scfg, synth_out);
    if (*tr) return cmd_train(io, load_config(copt, tr));
    if (*ev) return cmd_evaluate(eopt, ev);
    if (*ab) return cmd_ablate(aopt, io, load_config(copt, ab));
    if (*se) return cmd_search(trials, io, load_config(copt, se));
    if (*rp) return cmd_report(runs_dir, report_out);
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kDiverged;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kDataError;
  } catch (const ShapeError& e) {
    spdlog::error("{}", e.what());
    return kDataError;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kBadArgs;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return kBadArgs;
}
