#pragma once

// Brute-force metric definitions in long double, written from the formulas
// rather than from the library code paths.

#include <algorithm>
#include <cmath>
#include <vector>

namespace s2g::testing {

struct OracleMetrics {
  long double mse, msle, mad, log_mape_pct, r2, kappa;
};

// Quantile at i/bins. The position is formed as (n-1)*i/bins so that it is
// exact whenever it lands on an order statistic.
inline long double oracle_quantile(std::vector<long double> v, int i_num, int bins) {
  std::sort(v.begin(), v.end());
  const long double h = (static_cast<long double>(v.size()) - 1) * i_num / bins;
  const long double fl = std::floor(h);
  const auto i = static_cast<std::size_t>(fl);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - fl) * (v[i + 1] - v[i]);
}

/// Disagreement form: kappa = 1 - sum(d O) / sum(d E), d = |i-j|/(k-1).
inline long double oracle_kappa(const std::vector<int>& a, const std::vector<int>& b, int k) {
  std::vector<std::vector<long double>> cnt(k, std::vector<long double>(k, 0));
  for (std::size_t i = 0; i < a.size(); ++i) cnt[a[i]][b[i]] += 1;
  const long double n = a.size();
  long double num = 0, den = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      long double row = 0, col = 0;
      for (int t = 0; t < k; ++t) {
        row += cnt[i][t];
        col += cnt[t][j];
      }
      const long double d = std::abs(i - j) / static_cast<long double>(k - 1);
      num += d * cnt[i][j] / n;
      den += d * (row / n) * (col / n);
    }
  }
  return 1 - num / den;
}

inline OracleMetrics oracle_metrics(const std::vector<double>& y, const std::vector<double>& p, int bins = 10) {
  const std::size_t n = y.size();
  OracleMetrics m{};
  long double mean = 0;
  for (double v : y) mean += v;
  mean /= n;
  long double ssr = 0, sst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double e = (long double)y[i] - p[i];
    const long double ly = std::log1p((long double)y[i]), lp = std::log1p((long double)p[i]);
    m.mse += e * e / n;
    m.msle += (ly - lp) * (ly - lp) / n;
    m.mad += std::fabs(e) / n;
    m.log_mape_pct += 100 * std::fabs(ly - lp) / std::max(ly, 1e-8L) / n;
    ssr += e * e;
    sst += (y[i] - mean) * (y[i] - mean);
  }
  m.r2 = 1 - ssr / sst;
  std::vector<long double> yl(y.begin(), y.end());
  std::vector<long double> edges;
  for (int i = 1; i < bins; ++i) edges.push_back(oracle_quantile(yl, i, bins));
  auto bin = [&](double v) {
    int b = 0;
    for (long double e : edges) b += (long double)v >= e;
    return b;
  };
  std::vector<int> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = bin(y[i]);
    b[i] = bin(p[i]);
  }
  m.kappa = oracle_kappa(a, b, bins);
  return m;
}

/// Equal-count bins over predictions in ascending order (ties by index);
/// gap sum weighted by bin share, divided by the y_true range.
inline long double oracle_ece(const std::vector<double>& y, const std::vector<double>& p, std::size_t bins = 10) {
  const std::size_t n = y.size();
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < n; ++i) order.push_back({p[i], i});
  std::sort(order.begin(), order.end());
  long double gap = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins, hi = (b + 1) * n / bins;
    if (lo == hi) continue;
    long double sp = 0, st = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      sp += p[order[k].second];
      st += y[order[k].second];
    }
    const long double c = hi - lo;
    gap += c / n * std::fabs(sp / c - st / c);
  }
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  const long double range = *mx - *mn > 0 ? *mx - *mn : 1.0L;
  return gap / range;
}

}  // namespace s2g::testing
