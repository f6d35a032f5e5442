#include "s2g/core/nn.hpp"

#include <cmath>

namespace s2g::nn {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (double& v : t.storage()) v = rng.uniform(-a, a);
  return t;
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  return {Var::parameter(glorot_uniform(in, out, rng)), Var::parameter(Tensor({out}))};
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return {Var::parameter(Tensor({in, out})), Var::parameter(Tensor({out}))};
}

Linear Linear::identity(std::size_t n) {
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i) w.at(i, i) = 1.0;
  return {Var::parameter(std::move(w)), Var::parameter(Tensor({n}))};
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::init(std::size_t n) {
  return {Var::parameter(Tensor({n}, 1.0)), Var::parameter(Tensor({n})), 1e-5};
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

}  // namespace s2g::nn
