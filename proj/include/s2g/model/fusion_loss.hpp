#pragma once

// Static-feature encoder, softmax-weighted modality fusion, the log-domain
// target transform and the tail-weighted dual-head Huber objective.

#include <span>
#include <string>
#include <vector>

#include "s2g/core/autodiff.hpp"
#include "s2g/core/nn.hpp"

namespace s2g::model {

using ad::Var;

/// Linear -> LayerNorm -> GELU -> Dropout.
struct StaticEncoder {
  nn::Linear proj;
  nn::LayerNorm norm;

  static StaticEncoder init(std::size_t d_flat, std::size_t d_model, Rng& rng);
  Var operator()(const Var& x, double dropout, Rng& rng, bool training) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// Raw logits (graph, ts, flat); weights are their softmax.
struct FusionWeights {
  Var logits;

  static FusionWeights init(double graph_logit = 0.5, double ts_logit = 0.0, double flat_logit = 0.0);
  std::vector<double> normalized() const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// Concat(l_g z_graph, l_ts z_ts, l_flat z_flat) with l = softmax(logits).
Var fuse(const Var& z_graph, const Var& z_ts, const Var& z_flat, const Var& logits);

/// log1p(y); y < 0 throws std::invalid_argument.
double target_transform(double y);
/// max(0, expm1(z)).
double inverse_transform(double z);
std::vector<double> target_transform(std::span<const double> y);
std::vector<double> inverse_transform(std::span<const double> z);

struct LossConfig {
  double alpha = 0.3;  // auxiliary (temporal head) weight
  double gamma = 0.5;  // tail boost
  double tau = 7.0;    // tail threshold, days
  double delta = 1.0;  // Huber transition
};

/// mean_i w_i ((1-a) H(main_i - t_i) + a H(ts_i - t_i)), t = log1p(y),
/// w_i = 1 + gamma [y_i > tau]. Predictions are in the log domain, one per
/// sample (any shape with B elements).
Var compute_loss(const Var& pred_main, const Var& pred_ts, std::span<const double> y, const LossConfig& cfg);

}  // namespace s2g::model
