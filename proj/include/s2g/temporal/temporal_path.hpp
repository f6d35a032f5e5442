#pragma once

// State-space temporal encoder: per-step input embedding, stacked selective
// SSM blocks and mask-aware pooling.

#include <string>
#include <vector>

#include "s2g/core/autodiff.hpp"
#include "s2g/core/nn.hpp"

namespace s2g::temporal {

using ad::Var;

/// values: B x T x d, mask: B x T with entries in {0,1}.
struct TimeSeriesBatch {
  Tensor values;
  Tensor mask;

  std::size_t batch() const { return values.dim(0); }
  std::size_t steps() const { return values.dim(1); }
  std::size_t features() const { return values.dim(2); }
  /// Throws ShapeError / DataError on malformed input.
  void validate() const;
};

/// GELU(RMSNorm(X W0 + b0)) at every step.
struct InputEmbedding {
  nn::Linear proj;
  Var gain;
  double eps = 1e-6;

  static InputEmbedding init(std::size_t d_in, std::size_t d_model, Rng& rng);
  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

Var embed_input(const Var& x, const Var& w0, const Var& b0, const Var& gain, double eps);

/// Diagonal selective scan. x, delta: B x T x D; b, c: B x T x N;
/// a_log: D x N with A = -exp(a_log).
///   s_t = exp(delta_t A) * s_{t-1} + delta_t * b_t * x_t,  y_t = sum_n c_t s_t
/// Returns y: B x T x D. Throws NumericError if a state overflows.
Var selective_scan(const Var& x, const Var& delta, const Var& a_log, const Var& b, const Var& c);

struct SsmBlock {
  nn::Linear in_x;
  nn::Linear in_gate;
  nn::Linear in_delta;
  Var w_b;  // D x N
  Var w_c;  // D x N
  Var a_log;  // D x N
  nn::Linear out;

  /// A_n = -(n+1) per channel; delta bias so softplus(bias) lies in
  /// [1e-3, 1e-1]. `zero_out` zero-initializes the output projection.
  static SsmBlock init(std::size_t d_model, std::size_t d_state, Rng& rng, bool zero_out = false);

  /// h + Dropout(out((scan(...)) * silu(gate))).
  Var operator()(const Var& h, double dropout, Rng& rng, bool training) const;
  std::size_t d_state() const { return a_log.value().dim(1); }
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

enum class PoolMode { mean, last };
PoolMode parse_pool_mode(const std::string& s);
std::string to_string(PoolMode m);

/// B x T x D -> B x D over steps with mask = 1. An all-zero mask row is a
/// DataError.
Var mask_pool(const Var& h, const Tensor& mask, PoolMode mode);

struct TemporalConfig {
  std::size_t d_in = 0;
  std::size_t d_model = 128;
  std::size_t d_state = 16;
  std::size_t layers = 2;
  double dropout = 0.1;
  PoolMode pool = PoolMode::last;
};

struct TemporalEncoder {
  TemporalConfig cfg;
  InputEmbedding embed;
  std::vector<SsmBlock> blocks;

  static TemporalEncoder init(const TemporalConfig& cfg, Rng& rng);
  /// Hidden sequence after the last block, B x T x d_model.
  Var sequence(const TimeSeriesBatch& x, Rng& rng, bool training) const;
  /// Pooled representation, B x d_model.
  Var operator()(const TimeSeriesBatch& x, Rng& rng, bool training) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

}  // namespace s2g::temporal
