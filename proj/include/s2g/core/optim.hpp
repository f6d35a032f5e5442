#pragma once

#include <span>
#include <vector>

#include "s2g/core/autodiff.hpp"
#include "s2g/core/tensor.hpp"

namespace s2g {

struct AdamWOptions {
  double lr = 1.7e-4;
  double weight_decay = 0.01;
  /// Global gradient-norm bound; <= 0 disables clipping.
  double clip_norm = 2.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one slot per parameter tensor.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

double global_norm(std::span<const Tensor> grads);

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

/// One AdamW update with decoupled weight decay, applied after global-norm
/// clipping. Returns the pre-clip gradient norm.
double optimize_step(std::span<Tensor> params, std::vector<Tensor> grads, AdamWState& state,
                     const AdamWOptions& opt);

/// Convenience for autodiff parameters: reads their gradients, updates the
/// values in place and zeroes the gradients.
double optimize_step(std::span<ad::Var> params, AdamWState& state, const AdamWOptions& opt);

}  // namespace s2g
