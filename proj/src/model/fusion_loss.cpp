#include "s2g/model/fusion_loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace s2g::model {

StaticEncoder StaticEncoder::init(std::size_t d_flat, std::size_t d_model, Rng& rng) {
  return {nn::Linear::init(d_flat, d_model, rng), nn::LayerNorm::init(d_model)};
}

Var StaticEncoder::operator()(const Var& x, double dropout, Rng& rng, bool training) const {
  if (x.value().rank() != 2 || x.value().cols() != proj.in_features()) {
    throw ShapeError("static encoder: expected B x " + std::to_string(proj.in_features()) + ", got " +
                     shape_str(x.shape()));
  }
  return ad::dropout(ad::gelu(norm(proj(x))), dropout, rng, training);
}

void StaticEncoder::collect(const std::string& prefix, nn::ParamList& out) const {
  proj.collect(prefix + ".proj", out);
  norm.collect(prefix + ".norm", out);
}

FusionWeights FusionWeights::init(double graph_logit, double ts_logit, double flat_logit) {
  return {Var::parameter(Tensor::vector({graph_logit, ts_logit, flat_logit}))};
}

std::vector<double> FusionWeights::normalized() const {
  const Tensor w = ad::softmax(Var::constant(logits.value())).value();
  return {w.data().begin(), w.data().end()};
}

void FusionWeights::collect(const std::string& prefix, nn::ParamList& out) const {
  out.push_back({prefix + ".logits", logits});
}

Var fuse(const Var& z_graph, const Var& z_ts, const Var& z_flat, const Var& logits) {
  const std::size_t b = z_graph.value().rows();
  if (z_ts.value().rows() != b || z_flat.value().rows() != b) {
    throw ShapeError("fuse: batch sizes differ (" + shape_str(z_graph.shape()) + ", " + shape_str(z_ts.shape()) +
                     ", " + shape_str(z_flat.shape()) + ")");
  }
  if (logits.value().size() != 3) throw ShapeError("fuse: expected 3 fusion logits");
  const Var lambda = ad::softmax(logits);
  return ad::concat_cols({ad::scale_by(z_graph, lambda, 0), ad::scale_by(z_ts, lambda, 1),
                          ad::scale_by(z_flat, lambda, 2)});
}

double target_transform(double y) {
  if (!(y >= 0.0)) throw std::invalid_argument("target_transform: y must be >= 0");
  return std::log1p(y);
}

double inverse_transform(double z) { return std::max(0.0, std::expm1(z)); }

std::vector<double> target_transform(std::span<const double> y) {
  std::vector<double> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), [](double v) { return target_transform(v); });
  return out;
}

std::vector<double> inverse_transform(std::span<const double> z) {
  std::vector<double> out(z.size());
  std::transform(z.begin(), z.end(), out.begin(), [](double v) { return inverse_transform(v); });
  return out;
}

Var compute_loss(const Var& pred_main, const Var& pred_ts, std::span<const double> y, const LossConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw std::invalid_argument("loss: alpha must lie in [0, 1]");
  if (cfg.gamma < 0.0) throw std::invalid_argument("loss: gamma must be >= 0");
  const std::size_t b = y.size();
  if (b == 0 || pred_main.value().size() != b || pred_ts.value().size() != b) {
    throw ShapeError("loss: prediction and label counts differ");
  }
  Tensor target(pred_main.shape());
  Tensor w_main(pred_main.shape()), w_ts(pred_ts.shape());
  for (std::size_t i = 0; i < b; ++i) {
    target[i] = target_transform(y[i]);
    const double w = (1.0 + (y[i] > cfg.tau ? cfg.gamma : 0.0)) / static_cast<double>(b);
    w_main[i] = (1.0 - cfg.alpha) * w;
    w_ts[i] = cfg.alpha * w;
  }
  const Tensor target_ts = target.reshaped(pred_ts.shape());
  return ad::add(ad::weighted_sum(ad::huber(pred_main, target, cfg.delta), w_main),
                 ad::weighted_sum(ad::huber(pred_ts, target_ts, cfg.delta), w_ts));
}

}  // namespace s2g::model
