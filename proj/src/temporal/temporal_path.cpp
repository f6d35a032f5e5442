#include "s2g/temporal/temporal_path.hpp"

#include <cmath>
#include <stdexcept>

#include "s2g/core/io.hpp"

namespace s2g::temporal {

void TimeSeriesBatch::validate() const {
  if (values.rank() != 3) throw ShapeError("time series values must be B x T x d, got " + shape_str(values.shape()));
  if (mask.shape() != Shape{values.dim(0), values.dim(1)}) {
    throw ShapeError("mask shape " + shape_str(mask.shape()) + " does not match values " + shape_str(values.shape()));
  }
  const std::size_t t_len = steps();
  const std::size_t d = features();
  for (std::size_t b = 0; b < batch(); ++b) {
    bool any = false;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double m = mask.at(b, t);
      if (m != 0.0 && m != 1.0) throw DataError("mask entries must be 0 or 1");
      if (m == 1.0) {
        any = true;
        for (std::size_t j = 0; j < d; ++j) {
          if (!std::isfinite(values[(b * t_len + t) * d + j])) throw DataError("non-finite observed value");
        }
      }
    }
    if (!any) throw DataError("stay " + std::to_string(b) + " has no observed step");
  }
}

Var embed_input(const Var& x, const Var& w0, const Var& b0, const Var& gain, double eps) {
  return ad::gelu(ad::rms_norm(ad::linear(x, w0, b0), gain, eps));
}

InputEmbedding InputEmbedding::init(std::size_t d_in, std::size_t d_model, Rng& rng) {
  return {nn::Linear::init(d_in, d_model, rng), Var::parameter(Tensor({d_model}, 1.0)), 1e-6};
}

Var InputEmbedding::operator()(const Var& x) const {
  return embed_input(x, proj.weight, proj.bias, gain, eps);
}

void InputEmbedding::collect(const std::string& prefix, nn::ParamList& out) const {
  proj.collect(prefix + ".proj", out);
  out.push_back({prefix + ".gain", gain});
}

Var selective_scan(const Var& x, const Var& delta, const Var& a_log, const Var& b, const Var& c) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("selective_scan: x must be B x T x D");
  const std::size_t nb = xv.dim(0), nt = xv.dim(1), nd = xv.dim(2);
  if (a_log.value().rank() != 2 || a_log.value().dim(0) != nd) {
    throw ShapeError("selective_scan: a_log must be D x N, got " + shape_str(a_log.shape()));
  }
  const std::size_t nn_ = a_log.value().dim(1);
  if (delta.shape() != xv.shape() || b.shape() != Shape{nb, nt, nn_} || c.shape() != Shape{nb, nt, nn_}) {
    throw ShapeError("selective_scan: inconsistent shapes x" + shape_str(xv.shape()) + " delta" +
                     shape_str(delta.shape()) + " b" + shape_str(b.shape()) + " c" + shape_str(c.shape()));
  }
  std::vector<double> a(nd * nn_);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log.value()[i]);

  // states[b][t][d][n]
  auto states = std::make_shared<std::vector<double>>(nb * nt * nd * nn_);
  Tensor y({nb, nt, nd});
  const double* xp = xv.ptr();
  const double* dp = delta.value().ptr();
  const double* bp = b.value().ptr();
  const double* cp = c.value().ptr();
  for (std::size_t bi = 0; bi < nb; ++bi) {
    for (std::size_t t = 0; t < nt; ++t) {
      const std::size_t row = bi * nt + t;
      double* s = states->data() + row * nd * nn_;
      const double* prev = t > 0 ? s - nd * nn_ : nullptr;
      for (std::size_t d = 0; d < nd; ++d) {
        const double dt = dp[row * nd + d];
        const double u = dt * xp[row * nd + d];
        double acc = 0.0;
        for (std::size_t n = 0; n < nn_; ++n) {
          const std::size_t k = d * nn_ + n;
          double v = u * bp[row * nn_ + n];
          if (prev) v += std::exp(dt * a[k]) * prev[k];
          s[k] = v;
          acc += cp[row * nn_ + n] * v;
        }
        y[row * nd + d] = acc;
      }
    }
  }
  for (double v : *states) {
    if (!std::isfinite(v)) throw NumericError("selective_scan: state overflow");
  }

  return ad::make_result(
      std::move(y), {x, delta, a_log, b, c},
      [nb, nt, nd, nn_, a = std::move(a), states](ad::Node& self) {
        const auto& px = self.parents[0];
        const auto& pd = self.parents[1];
        const auto& pa = self.parents[2];
        const auto& pb = self.parents[3];
        const auto& pc = self.parents[4];
        const double* xp = px->value.ptr();
        const double* dp = pd->value.ptr();
        const double* bp = pb->value.ptr();
        const double* cp = pc->value.ptr();
        const double* gy = self.grad.ptr();
        double* gx = px->requires_grad ? px->grad_buffer().ptr() : nullptr;
        double* gd = pd->requires_grad ? pd->grad_buffer().ptr() : nullptr;
        double* ga = pa->requires_grad ? pa->grad_buffer().ptr() : nullptr;
        double* gb = pb->requires_grad ? pb->grad_buffer().ptr() : nullptr;
        double* gc = pc->requires_grad ? pc->grad_buffer().ptr() : nullptr;
        std::vector<double> carry(nd * nn_);
        for (std::size_t bi = 0; bi < nb; ++bi) {
          std::fill(carry.begin(), carry.end(), 0.0);
          for (std::size_t t = nt; t-- > 0;) {
            const std::size_t row = bi * nt + t;
            const double* s = states->data() + row * nd * nn_;
            const double* prev = t > 0 ? s - nd * nn_ : nullptr;
            for (std::size_t d = 0; d < nd; ++d) {
              const double g_out = gy[row * nd + d];
              const double dt = dp[row * nd + d];
              const double xv = xp[row * nd + d];
              double g_dt = 0.0;
              double g_x = 0.0;
              for (std::size_t n = 0; n < nn_; ++n) {
                const std::size_t k = d * nn_ + n;
                if (gc) gc[row * nn_ + n] += g_out * s[k];
                const double gs = carry[k] + g_out * cp[row * nn_ + n];
                const double bn = bp[row * nn_ + n];
                g_dt += gs * bn * xv;
                g_x += gs * dt * bn;
                if (gb) gb[row * nn_ + n] += gs * dt * xv;
                if (prev) {
                  const double decay = std::exp(dt * a[k]);
                  const double term = gs * decay * prev[k];
                  g_dt += term * a[k];
                  // dA/da_log = A
                  if (ga) ga[k] += term * dt * a[k];
                  carry[k] = gs * decay;
                } else {
                  carry[k] = 0.0;
                }
              }
              if (gd) gd[row * nd + d] += g_dt;
              if (gx) gx[row * nd + d] += g_x;
            }
          }
        }
      },
      "selective_scan");
}

SsmBlock SsmBlock::init(std::size_t d_model, std::size_t d_state, Rng& rng, bool zero_out) {
  if (d_state < 1) throw std::invalid_argument("d_state must be >= 1");
  SsmBlock blk;
  blk.in_x = nn::Linear::init(d_model, d_model, rng);
  blk.in_gate = nn::Linear::init(d_model, d_model, rng);
  blk.in_delta = nn::Linear::init(d_model, d_model, rng);
  for (double& w : blk.in_delta.weight.mutable_value().storage()) w *= 0.1;
  for (double& v : blk.in_delta.bias.mutable_value().storage()) {
    const double target = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = target + std::log(-std::expm1(-target));  // softplus^-1
  }
  blk.w_b = Var::parameter(nn::glorot_uniform(d_model, d_state, rng));
  blk.w_c = Var::parameter(nn::glorot_uniform(d_model, d_state, rng));
  Tensor a_log({d_model, d_state});
  for (std::size_t d = 0; d < d_model; ++d) {
    for (std::size_t n = 0; n < d_state; ++n) a_log.at(d, n) = std::log(static_cast<double>(n + 1));
  }
  blk.a_log = Var::parameter(std::move(a_log));
  blk.out = zero_out ? nn::Linear::zeros(d_model, d_model) : nn::Linear::init(d_model, d_model, rng);
  return blk;
}

Var SsmBlock::operator()(const Var& h, double dropout, Rng& rng, bool training) const {
  const Var x = in_x(h);
  const Var gate = ad::silu(in_gate(h));
  const Var delta = ad::softplus(in_delta(h));
  const Var y = selective_scan(x, delta, a_log, ad::matmul(h, w_b), ad::matmul(h, w_c));
  return ad::add(h, ad::dropout(out(ad::mul(y, gate)), dropout, rng, training));
}

void SsmBlock::collect(const std::string& prefix, nn::ParamList& out_list) const {
  in_x.collect(prefix + ".in_x", out_list);
  in_gate.collect(prefix + ".in_gate", out_list);
  in_delta.collect(prefix + ".in_delta", out_list);
  out_list.push_back({prefix + ".w_b", w_b});
  out_list.push_back({prefix + ".w_c", w_c});
  out_list.push_back({prefix + ".a_log", a_log});
  out.collect(prefix + ".out", out_list);
}

PoolMode parse_pool_mode(const std::string& s) {
  if (s == "mean") return PoolMode::mean;
  if (s == "last") return PoolMode::last;
  throw std::invalid_argument("unknown pooling '" + s + "' (mean, last)");
}

std::string to_string(PoolMode m) { return m == PoolMode::mean ? "mean" : "last"; }

Var mask_pool(const Var& h, const Tensor& mask, PoolMode mode) {
  const Tensor& hv = h.value();
  if (hv.rank() != 3 || mask.shape() != Shape{hv.dim(0), hv.dim(1)}) {
    throw ShapeError("mask_pool: h " + shape_str(hv.shape()) + " mask " + shape_str(mask.shape()));
  }
  const std::size_t nb = hv.dim(0), nt = hv.dim(1), nd = hv.dim(2);
  // Per row: the steps that contribute and their coefficient.
  std::vector<std::vector<std::pair<std::size_t, double>>> taps(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<std::size_t> obs;
    for (std::size_t t = 0; t < nt; ++t) {
      if (mask.at(b, t) != 0.0) obs.push_back(t);
    }
    if (obs.empty()) throw DataError("mask_pool: row " + std::to_string(b) + " has no observed step");
    if (mode == PoolMode::last) {
      taps[b].push_back({obs.back(), 1.0});
    } else {
      const double inv = 1.0 / static_cast<double>(obs.size());
      for (std::size_t t : obs) taps[b].push_back({t, inv});
    }
  }
  Tensor out({nb, nd});
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t j = 0; j < nd; ++j) {
      double acc = 0.0;
      for (const auto& [t, w] : taps[b]) acc += w * hv[(b * nt + t) * nd + j];
      out.at(b, j) = acc;
    }
  }
  return ad::make_result(
      std::move(out), {h},
      [taps = std::move(taps), nt, nd](ad::Node& self) {
        double* g = self.parents[0]->grad_buffer().ptr();
        for (std::size_t b = 0; b < taps.size(); ++b) {
          for (const auto& [t, w] : taps[b]) {
            for (std::size_t j = 0; j < nd; ++j) g[(b * nt + t) * nd + j] += w * self.grad.at(b, j);
          }
        }
      },
      "mask_pool");
}

TemporalEncoder TemporalEncoder::init(const TemporalConfig& cfg, Rng& rng) {
  TemporalEncoder enc;
  enc.cfg = cfg;
  enc.embed = InputEmbedding::init(cfg.d_in, cfg.d_model, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) enc.blocks.push_back(SsmBlock::init(cfg.d_model, cfg.d_state, rng));
  return enc;
}

Var TemporalEncoder::sequence(const TimeSeriesBatch& x, Rng& rng, bool training) const {
  if (x.features() != cfg.d_in) {
    throw ShapeError("temporal encoder expects " + std::to_string(cfg.d_in) + " features, got " +
                     std::to_string(x.features()));
  }
  Var h = embed(Var::constant(x.values));
  for (const auto& blk : blocks) h = blk(h, cfg.dropout, rng, training);
  return h;
}

Var TemporalEncoder::operator()(const TimeSeriesBatch& x, Rng& rng, bool training) const {
  return mask_pool(sequence(x, rng, training), x.mask, cfg.pool);
}

void TemporalEncoder::collect(const std::string& prefix, nn::ParamList& out) const {
  embed.collect(prefix + ".embed", out);
  for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].collect(prefix + ".block" + std::to_string(l), out);
}

}  // namespace s2g::temporal
