#pragma once

// Regression metrics, linear weighted kappa over equal-frequency bins,
// reliability binning with a range-normalized calibration error, and
// multi-seed aggregation.

#include <map>
#include <span>
#include <string>
#include <vector>

namespace s2g::eval {

struct RegressionMetrics {
  double mse = 0.0;
  double msle = 0.0;
  double mad = 0.0;
  double log_mape_pct = 0.0;
  double r2 = 0.0;  // NaN when y_true is constant
};

/// Throws std::invalid_argument on empty / mismatched / negative input.
RegressionMetrics regression_metrics(std::span<const double> y_true, std::span<const double> y_pred,
                                     double eps = 1e-8);

/// bins-1 interior edges at the i/bins quantiles of `v` (linear
/// interpolation between order statistics).
std::vector<double> quantile_edges(std::span<const double> v, std::size_t bins);
/// Bin index = number of edges <= x.
std::size_t bin_of(double x, std::span<const double> edges);

struct KappaResult {
  double kappa = 0.0;  // NaN when chance agreement is 1
  std::vector<double> edges;
};

/// Linear-weight kappa with w_ij = 1 - |i-j|/(k-1); both series are binned
/// with the equal-frequency edges of y_true.
KappaResult weighted_kappa(std::span<const double> y_true, std::span<const double> y_pred, std::size_t bins = 10);
/// Kappa from already-binned labels in [0, k).
double weighted_kappa_from_bins(std::span<const std::size_t> a, std::span<const std::size_t> b, std::size_t k);

struct Reliability {
  std::vector<double> mean_pred;
  std::vector<double> mean_true;
  std::vector<std::size_t> counts;
  double ece = 0.0;
};

/// Equal-frequency bins over predictions sorted ascending (stable); bin b
/// holds sorted positions [floor(b n / B), floor((b+1) n / B)). The gap sum
/// is divided by max(y_true) - min(y_true), or by 1 when that range is 0.
Reliability reliability_ece(std::span<const double> y_true, std::span<const double> y_pred, std::size_t n_bins = 10);

struct MetricReport {
  std::size_t n = 0;
  double mse = 0.0;
  double msle = 0.0;
  double mad = 0.0;
  double log_mape_pct = 0.0;
  double r2 = 0.0;
  double kappa = 0.0;
  double ece = 0.0;

  /// (name, value) in a fixed order.
  std::vector<std::pair<std::string, double>> fields() const;
};

MetricReport evaluate(std::span<const double> y_true, std::span<const double> y_pred);

struct AggregateReport {
  std::size_t runs = 0;
  MetricReport mean;
  MetricReport std;  // sample sd, 0 for a single run
};

AggregateReport aggregate_seeds(std::span<const MetricReport> reports);

/// key=value lines in fields() order.
std::string to_key_values(const MetricReport& r);
MetricReport from_key_values(const std::map<std::string, std::string>& kv);

}  // namespace s2g::eval
