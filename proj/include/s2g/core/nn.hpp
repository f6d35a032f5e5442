#pragma once

// Small parameter containers shared by the encoders.

#include <string>
#include <utility>
#include <vector>

#include "s2g/core/autodiff.hpp"
#include "s2g/core/rng.hpp"

namespace s2g::nn {

using ad::Var;

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Linear {
  Var weight;  // in x out
  Var bias;    // out

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);
  /// Identity map (in == out).
  static Linear identity(std::size_t n);

  Var operator()(const Var& x) const { return ad::linear(x, weight, bias); }
  std::size_t in_features() const { return weight.value().dim(0); }
  std::size_t out_features() const { return weight.value().dim(1); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Var gain;
  Var bias;
  double eps = 1e-5;

  static LayerNorm init(std::size_t n);
  Var operator()(const Var& x) const { return ad::layer_norm(x, gain, bias, eps); }
  void collect(const std::string& prefix, ParamList& out) const;
};

std::size_t count_parameters(const ParamList& params);

}  // namespace s2g::nn
