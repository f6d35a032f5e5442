#include "s2g/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "s2g/core/io.hpp"

namespace s2g::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pair(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("metrics: y_true and y_pred lengths differ");
  if (y_true.empty()) throw std::invalid_argument("metrics: empty prediction set");
}

}  // namespace

RegressionMetrics regression_metrics(std::span<const double> y_true, std::span<const double> y_pred, double eps) {
  check_pair(y_true, y_pred);
  const double n = static_cast<double>(y_true.size());
  double se = 0.0, sle = 0.0, ae = 0.0, lape = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double y = y_true[i], p = y_pred[i];
    if (y < 0.0 || p < 0.0) throw std::invalid_argument("metrics: values must be >= 0");
    se += (y - p) * (y - p);
    const double ly = std::log1p(y), lp = std::log1p(p);
    sle += (ly - lp) * (ly - lp);
    ae += std::abs(y - p);
    lape += std::abs(ly - lp) / std::max(ly, eps);
    mean_y += y;
  }
  mean_y /= n;
  double ss_tot = 0.0;
  for (double y : y_true) ss_tot += (y - mean_y) * (y - mean_y);
  RegressionMetrics m;
  m.mse = se / n;
  m.msle = sle / n;
  m.mad = ae / n;
  m.log_mape_pct = 100.0 * lape / n;
  if (ss_tot > 0.0) {
    m.r2 = 1.0 - se / ss_tot;
  } else {
    spdlog::warn("R^2 undefined: y_true is constant");
    m.r2 = kNaN;
  }
  return m;
}

std::vector<double> quantile_edges(std::span<const double> v, std::size_t bins) {
  if (v.empty() || bins == 0) throw std::invalid_argument("quantile_edges: empty input");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  std::vector<double> edges;
  const double last = static_cast<double>(s.size() - 1);
  for (std::size_t i = 1; i < bins; ++i) {
    const double pos = last * static_cast<double>(i) / static_cast<double>(bins);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    edges.push_back(s[lo] + frac * (s[hi] - s[lo]));
  }
  return edges;
}

std::size_t bin_of(double x, std::span<const double> edges) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
}

double weighted_kappa_from_bins(std::span<const std::size_t> a, std::span<const std::size_t> b, std::size_t k) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("kappa: label lengths differ or are empty");
  if (k < 2) return kNaN;
  std::vector<double> obs(k * k, 0.0), ra(k, 0.0), rb(k, 0.0);
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] >= k || b[i] >= k) throw std::invalid_argument("kappa: bin label out of range");
    obs[a[i] * k + b[i]] += 1.0 / n;
    ra[a[i]] += 1.0 / n;
    rb[b[i]] += 1.0 / n;
  }
  double po = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double w = 1.0 - std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(k - 1);
      po += w * obs[i * k + j];
      pe += w * ra[i] * rb[j];
    }
  }
  if (!(1.0 - pe > 0.0)) return kNaN;
  return (po - pe) / (1.0 - pe);
}

KappaResult weighted_kappa(std::span<const double> y_true, std::span<const double> y_pred, std::size_t bins) {
  check_pair(y_true, y_pred);
  if (bins < 2) throw std::invalid_argument("kappa: need at least 2 bins");
  KappaResult r;
  r.edges = quantile_edges(y_true, bins);
  std::vector<std::size_t> a(y_true.size()), b(y_true.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = bin_of(y_true[i], r.edges);
    b[i] = bin_of(y_pred[i], r.edges);
  }
  r.kappa = weighted_kappa_from_bins(a, b, bins);
  if (std::isnan(r.kappa)) spdlog::warn("kappa undefined: all samples fall in a single bin");
  return r;
}

Reliability reliability_ece(std::span<const double> y_true, std::span<const double> y_pred, std::size_t n_bins) {
  check_pair(y_true, y_pred);
  if (n_bins == 0) throw std::invalid_argument("reliability: need at least one bin");
  const std::size_t n = y_true.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y_pred[a] < y_pred[b]; });
  const auto [lo, hi] = std::minmax_element(y_true.begin(), y_true.end());
  const double range = *hi - *lo > 0.0 ? *hi - *lo : 1.0;
  Reliability r;
  double gap = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t begin = b * n / n_bins, end = (b + 1) * n / n_bins;
    if (begin == end) continue;
    double sp = 0.0, st = 0.0;
    for (std::size_t p = begin; p < end; ++p) {
      sp += y_pred[order[p]];
      st += y_true[order[p]];
    }
    const double cnt = static_cast<double>(end - begin);
    r.mean_pred.push_back(sp / cnt);
    r.mean_true.push_back(st / cnt);
    r.counts.push_back(end - begin);
    gap += cnt / static_cast<double>(n) * std::abs(sp / cnt - st / cnt);
  }
  r.ece = gap / range;
  return r;
}

std::vector<std::pair<std::string, double>> MetricReport::fields() const {
  return {{"r2", r2},       {"kappa", kappa},       {"mse", mse}, {"msle", msle},
          {"mad", mad},     {"log_mape_pct", log_mape_pct},      {"ece", ece}};
}

MetricReport evaluate(std::span<const double> y_true, std::span<const double> y_pred) {
  const auto m = regression_metrics(y_true, y_pred);
  MetricReport r;
  r.n = y_true.size();
  r.mse = m.mse;
  r.msle = m.msle;
  r.mad = m.mad;
  r.log_mape_pct = m.log_mape_pct;
  r.r2 = m.r2;
  r.kappa = y_true.size() >= 2 ? weighted_kappa(y_true, y_pred).kappa : kNaN;
  r.ece = reliability_ece(y_true, y_pred).ece;
  return r;
}

AggregateReport aggregate_seeds(std::span<const MetricReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_seeds: no reports");
  AggregateReport out;
  out.runs = reports.size();
  out.mean.n = reports.front().n;
  out.std.n = reports.front().n;
  const double k = static_cast<double>(reports.size());
  auto stat = [&](double MetricReport::*field) {
    double mean = 0.0;
    for (const auto& r : reports) mean += r.*field;
    mean /= k;
    double ss = 0.0;
    for (const auto& r : reports) ss += (r.*field - mean) * (r.*field - mean);
    out.mean.*field = mean;
    out.std.*field = reports.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
  };
  for (auto f : {&MetricReport::mse, &MetricReport::msle, &MetricReport::mad, &MetricReport::log_mape_pct,
                 &MetricReport::r2, &MetricReport::kappa, &MetricReport::ece}) {
    stat(f);
  }
  return out;
}

std::string to_key_values(const MetricReport& r) {
  std::ostringstream os;
  os << "n=" << r.n << '\n';
  for (const auto& [k, v] : r.fields()) os << k << '=' << format_double(v) << '\n';
  return os.str();
}

MetricReport from_key_values(const std::map<std::string, std::string>& kv) {
  MetricReport r;
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("metric report missing '") + key + "'");
    return it->second;
  };
  r.n = std::stoul(get("n"));
  auto num = [&](const char* key) {
    const std::string s = get(key);
    if (s == "nan") return kNaN;
    return std::stod(s);
  };
  r.r2 = num("r2");
  r.kappa = num("kappa");
  r.mse = num("mse");
  r.msle = num("msle");
  r.mad = num("mad");
  r.log_mape_pct = num("log_mape_pct");
  r.ece = num("ece");
  return r;
}

}  // namespace s2g::eval
