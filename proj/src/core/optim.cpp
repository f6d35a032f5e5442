#include "s2g/core/optim.hpp"

#include <cmath>
#include <string>

namespace s2g {

double global_norm(std::span<const Tensor> grads) {
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double v : g.storage()) ss += v * v;
  }
  return std::sqrt(ss);
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double c = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.storage()) v *= c;
    }
  }
  return norm;
}

double optimize_step(std::span<Tensor> params, std::vector<Tensor> grads, AdamWState& state,
                     const AdamWOptions& opt) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimize_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (!(opt.lr >= 0.0)) throw std::invalid_argument("optimize_step: lr must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "optimize_step");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros_like(p));
      state.v.push_back(Tensor::zeros_like(p));
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("optimize_step: optimizer state was built for a different parameter set");
  }

  const double norm = clip_global_norm(grads, opt.clip_norm);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - opt.lr * opt.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    require_same_shape(p, m, "optimize_step");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] = p[j] * decay - opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
  return norm;
}

double optimize_step(std::span<ad::Var> params, AdamWState& state, const AdamWOptions& opt) {
  std::vector<Tensor> values;
  std::vector<Tensor> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (auto& p : params) {
    grads.push_back(p.grad());
    values.push_back(std::move(p.mutable_value()));
  }
  double norm = 0.0;
  try {
    norm = optimize_step(std::span<Tensor>(values), std::move(grads), state, opt);
  } catch (...) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = std::move(values[i]);
    throw;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].mutable_value() = std::move(values[i]);
    params[i].zero_grad();
  }
  return norm;
}

}  // namespace s2g
