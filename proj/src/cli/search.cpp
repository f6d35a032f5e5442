#include <cmath>
#include <stdexcept>

#include "s2g/cli/harness.hpp"

namespace s2g::harness {

namespace {

template <typename T>
T pick(const std::vector<T>& options, Rng& rng) {
  return options[static_cast<std::size_t>(rng.below(options.size()))];
}

}  // namespace

RunConfig sample_config(const RunConfig& base, Rng& rng) {
  RunConfig c = base;
  auto& m = c.model;
  m.d_model = pick<std::size_t>({64, 128, 256}, rng);
  m.ts_layers = pick<std::size_t>({2, 3, 4}, rng);
  m.d_state = pick<std::size_t>({16, 32, 64}, rng);
  m.ts_dropout = pick<double>({0.1, 0.2}, rng);
  m.pool = pick<temporal::PoolMode>({temporal::PoolMode::mean, temporal::PoolMode::last}, rng);
  m.gps_layers = pick<std::size_t>({2, 3, 4}, rng);
  m.gps_dropout = pick<double>({0.1, 0.2}, rng);
  m.fusion_graph_logit = pick<double>({0.3, 0.5, 0.7}, rng);
  c.lr = std::exp(rng.uniform(std::log(1e-5), std::log(1e-3)));
  c.batch_size = pick<std::size_t>({32, 64, 128}, rng);
  c.clip = pick<double>({0.0, 2.0, 5.0}, rng);
  c.fanouts = pick<std::vector<std::size_t>>({{15, 10}, {25, 15}}, rng);
  return c;
}

SearchResult random_search(const RunConfig& base, std::size_t n_trials, std::uint64_t seed, const TrialRunner& run) {
  if (n_trials == 0) throw std::invalid_argument("search: n_trials must be >= 1");
  SearchResult res;
  Rng rng(mix_seed(seed, 31));
  for (std::size_t t = 0; t < n_trials; ++t) {
    Trial trial;
    trial.config = sample_config(base, rng);
    trial.record = run(trial.config);
    trial.val_rmse = std::sqrt(trial.record.val.mse);
    res.trials.push_back(std::move(trial));
  }
  for (std::size_t t = 1; t < res.trials.size(); ++t) {
    if (res.trials[t].val_rmse < res.trials[res.best_rmse].val_rmse) res.best_rmse = t;
    const double r2 = res.trials[t].record.val.r2;
    const double best = res.trials[res.best_r2].record.val.r2;
    if (r2 > best || (std::isnan(best) && !std::isnan(r2))) res.best_r2 = t;
  }
  return res;
}

}  // namespace s2g::harness
