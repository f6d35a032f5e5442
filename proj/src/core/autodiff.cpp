#include "s2g/core/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

namespace s2g::ad {

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor::zeros_like(value);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.shape() == node_->value.shape()) return node_->grad;
  return Tensor::zeros_like(node_->value);
}

void Var::zero_grad() {
  if (node_->grad.shape() == node_->value.shape()) node_->grad.fill(0.0);
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn,
                std::string_view op) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite output");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  for (const auto& p : parents) {
    if (p.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void accumulate(const NodePtr& n, const Tensor& g) {
  if (!n || !n->requires_grad) return;
  Tensor& buf = n->grad_buffer();
  double* dst = buf.ptr();
  const double* src = g.ptr();
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += src[i];
}

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " +
                     (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.shape() == n->value.shape()) n->backward_fn(*n);
  }
}

namespace {

const NodePtr& parent(const Node& n, std::size_t i) { return n.parents.at(i); }

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df, std::string_view op) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(
      std::move(out), {x},
      [df](Node& self) {
        const NodePtr& px = parent(self, 0);
        if (!px->requires_grad) return;
        const Tensor& xin = px->value;
        Tensor& gx = px->grad_buffer();
        for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += self.grad[i] * df(xin[i]);
      },
      op);
}

std::size_t require_rows_cols(const Tensor& t, std::string_view op) {
  if (t.rank() == 0 || t.cols() == 0) {
    throw ShapeError(std::string(op) + ": zero-length last axis in shape " + shape_str(t.shape()));
  }
  return t.cols();
}

}  // namespace

// -- scalar primitives ----------------------------------------------------------

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double huber_scalar(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_grad_scalar(double r, double delta) {
  if (std::abs(r) <= delta) return r;
  return r > 0 ? delta : -delta;
}

// -- arithmetic -----------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(
      std::move(out), {a, b},
      [](Node& self) {
        accumulate(parent(self, 0), self.grad);
        accumulate(parent(self, 1), self.grad);
      },
      "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(
      std::move(out), {a, b},
      [](Node& self) {
        accumulate(parent(self, 0), self.grad);
        const NodePtr& pb = parent(self, 1);
        if (pb->requires_grad) {
          Tensor& g = pb->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
      },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(
      std::move(out), {a, b},
      [](Node& self) {
        const NodePtr& pa = parent(self, 0);
        const NodePtr& pb = parent(self, 1);
        if (pa->requires_grad) {
          Tensor& g = pa->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
          Tensor& g = pb->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
      },
      "mul");
}

Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= c;
  return make_result(
      std::move(out), {a},
      [c](Node& self) {
        const NodePtr& pa = parent(self, 0);
        if (!pa->requires_grad) return;
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
      },
      "scale");
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (double& v : out.storage()) v += c;
  return make_result(
      std::move(out), {a}, [](Node& self) { accumulate(parent(self, 0), self.grad); },
      "add_scalar");
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t cols = x.value().cols();
  if (bias.value().size() != cols) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                     shape_str(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.value()[c];
  }
  return make_result(
      std::move(out), {x, bias},
      [rows, cols](Node& self) {
        accumulate(parent(self, 0), self.grad);
        const NodePtr& pb = parent(self, 1);
        if (!pb->requires_grad) return;
        Tensor& gb = pb->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gb[c] += self.grad[r * cols + c];
        }
      },
      "add_bias");
}

Var matmul(const Var& x, const Var& w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.rank() == 0 || xv.cols() != wv.dim(0)) {
    throw ShapeError("matmul: " + shape_str(xv.shape()) + " @ " + shape_str(wv.shape()));
  }
  const std::size_t m = xv.rows();
  const std::size_t k = wv.dim(0);
  const std::size_t n = wv.dim(1);
  Shape out_shape = xv.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  const double* xp = xv.ptr();
  const double* wp = wv.ptr();
  double* op = out.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = op + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double a = xp[i * k + kk];
      if (a == 0.0) continue;
      const double* wrow = wp + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += a * wrow[j];
    }
  }
  return make_result(
      std::move(out), {x, w},
      [m, k, n](Node& self) {
        const NodePtr& px = parent(self, 0);
        const NodePtr& pw = parent(self, 1);
        const double* g = self.grad.ptr();
        if (px->requires_grad) {
          double* gx = px->grad_buffer().ptr();
          const double* wp = pw->value.ptr();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* wrow = wp + kk * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
              gx[i * k + kk] += acc;
            }
          }
        }
        if (pw->requires_grad) {
          double* gw = pw->grad_buffer().ptr();
          const double* xp = px->value.ptr();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double a = xp[i * k + kk];
              if (a == 0.0) continue;
              double* gwrow = gw + kk * n;
              for (std::size_t j = 0; j < n; ++j) gwrow[j] += a * grow[j];
            }
          }
        }
      },
      "matmul");
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_bias(matmul(x, w), b); }

Var gelu(const Var& x) { return unary(x, gelu_scalar, gelu_grad_scalar, "gelu"); }

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v) { return v > 0 ? 1.0 : 0.0; },
      "relu");
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      },
      "silu");
}

Var softplus(const Var& x) { return unary(x, softplus_scalar, sigmoid_scalar, "softplus"); }

Tensor gelu(const Tensor& x) {
  require_finite(x, "gelu");
  return gelu(Var::constant(x)).value();
}

// -- normalizations ----------------------------------------------------------

Var rms_norm(const Var& x, const Var& gain, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = require_rows_cols(xv, "rms_norm");
  if (eps < 0) throw std::invalid_argument("rms_norm: eps must be >= 0");
  if (gain.value().size() != n) throw ShapeError("rms_norm: gain size mismatch");
  const std::size_t rows = xv.rows();
  Tensor out(xv.shape());
  std::vector<double> inv_r(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.ptr() + r * n;
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += row[j] * row[j];
    inv_r[r] = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] * inv_r[r] * gain.value()[j];
  }
  return make_result(
      std::move(out), {x, gain},
      [rows, n, inv_r = std::move(inv_r)](Node& self) {
        const NodePtr& px = parent(self, 0);
        const NodePtr& pg = parent(self, 1);
        const Tensor& xin = px->value;
        const Tensor& g = pg->value;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* row = xin.ptr() + r * n;
          const double* dy = self.grad.ptr() + r * n;
          const double ir = inv_r[r];
          if (px->requires_grad) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += dy[j] * g[j] * row[j];
            const double coef = dot * ir * ir * ir / static_cast<double>(n);
            double* gx = px->grad_buffer().ptr() + r * n;
            for (std::size_t j = 0; j < n; ++j) gx[j] += dy[j] * g[j] * ir - row[j] * coef;
          }
          if (pg->requires_grad) {
            double* gg = pg->grad_buffer().ptr();
            for (std::size_t j = 0; j < n; ++j) gg[j] += dy[j] * row[j] * ir;
          }
        }
      },
      "rms_norm");
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  return rms_norm(Var::constant(x), Var::constant(gain), eps).value();
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = require_rows_cols(xv, "layer_norm");
  if (gain.value().size() != n || bias.value().size() != n) {
    throw ShapeError("layer_norm: gain/bias size mismatch");
  }
  const std::size_t rows = xv.rows();
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_r(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.ptr() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_r[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * inv_r[r];
      xhat[r * n + j] = h;
      out[r * n + j] = h * gain.value()[j] + bias.value()[j];
    }
  }
  return make_result(
      std::move(out), {x, gain, bias},
      [rows, n, inv_r = std::move(inv_r), xhat = std::move(xhat)](Node& self) {
        const NodePtr& px = parent(self, 0);
        const NodePtr& pg = parent(self, 1);
        const NodePtr& pb = parent(self, 2);
        const Tensor& g = pg->value;
        const double dn = static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dy = self.grad.ptr() + r * n;
          const double* h = xhat.ptr() + r * n;
          if (px->requires_grad) {
            double m1 = 0.0;
            double m2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double gh = dy[j] * g[j];
              m1 += gh;
              m2 += gh * h[j];
            }
            m1 /= dn;
            m2 /= dn;
            double* gx = px->grad_buffer().ptr() + r * n;
            for (std::size_t j = 0; j < n; ++j) {
              gx[j] += inv_r[r] * (dy[j] * g[j] - m1 - h[j] * m2);
            }
          }
          if (pg->requires_grad) {
            double* gg = pg->grad_buffer().ptr();
            for (std::size_t j = 0; j < n; ++j) gg[j] += dy[j] * h[j];
          }
          if (pb->requires_grad) {
            double* gb = pb->grad_buffer().ptr();
            for (std::size_t j = 0; j < n; ++j) gb[j] += dy[j];
          }
        }
      },
      "layer_norm");
}

Var batch_norm(const Var& x, const Var& gain, const Var& bias, BatchNormState& state,
               bool training, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = require_rows_cols(xv, "batch_norm");
  const std::size_t rows = xv.rows();
  if (gain.value().size() != n || bias.value().size() != n || state.running_mean.size() != n ||
      state.running_var.size() != n) {
    throw ShapeError("batch_norm: parameter size mismatch");
  }
  if (rows == 0) throw ShapeError("batch_norm: empty batch");
  std::vector<double> mu(n, 0.0);
  std::vector<double> inv_r(n);
  if (training) {
    std::vector<double> var(n, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < n; ++c) mu[c] += xv[r * n + c];
    }
    for (double& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double d = xv[r * n + c] - mu[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < n; ++c) {
      const double biased = var[c] / static_cast<double>(rows);
      inv_r[c] = 1.0 / std::sqrt(biased + eps);
      const double unbiased = rows > 1 ? var[c] / static_cast<double>(rows - 1) : biased;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu[c];
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < n; ++c) {
      mu[c] = state.running_mean[c];
      inv_r[c] = 1.0 / std::sqrt(state.running_var[c] + eps);
    }
  }
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (xv[r * n + c] - mu[c]) * inv_r[c];
      xhat[r * n + c] = h;
      out[r * n + c] = h * gain.value()[c] + bias.value()[c];
    }
  }
  return make_result(
      std::move(out), {x, gain, bias},
      [rows, n, training, inv_r = std::move(inv_r), xhat = std::move(xhat)](Node& self) {
        const NodePtr& px = parent(self, 0);
        const NodePtr& pg = parent(self, 1);
        const NodePtr& pb = parent(self, 2);
        const Tensor& g = pg->value;
        const Tensor& dy = self.grad;
        if (px->requires_grad) {
          Tensor& gx = px->grad_buffer();
          if (training) {
            std::vector<double> m1(n, 0.0);
            std::vector<double> m2(n, 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < n; ++c) {
                const double gh = dy[r * n + c] * g[c];
                m1[c] += gh;
                m2[c] += gh * xhat[r * n + c];
              }
            }
            const double dr = static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < n; ++c) {
                gx[r * n + c] += inv_r[c] * (dy[r * n + c] * g[c] - m1[c] / dr -
                                             xhat[r * n + c] * m2[c] / dr);
              }
            }
          } else {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += dy[r * n + c] * g[c] * inv_r[c];
            }
          }
        }
        if (pg->requires_grad) {
          Tensor& gg = pg->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < n; ++c) gg[c] += dy[r * n + c] * xhat[r * n + c];
          }
        }
        if (pb->requires_grad) {
          Tensor& gb = pb->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < n; ++c) gb[c] += dy[r * n + c];
          }
        }
      },
      "batch_norm");
}

Var dropout(const Var& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (double& m : mask.storage()) m = rng.uniform() >= rate ? keep_scale : 0.0;
  return mul(x, Var::constant(std::move(mask)));
}

// -- structural ---------------------------------------------------------------

Var gather_rows(const Var& x, std::span<const std::size_t> idx) {
  const Tensor& xv = x.value();
  const std::size_t cols = xv.cols();
  const std::size_t rows = xv.rows();
  Tensor out({idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(xv.ptr() + idx[i] * cols, cols, out.ptr() + i * cols);
  }
  std::vector<std::size_t> index(idx.begin(), idx.end());
  return make_result(
      std::move(out), {x},
      [cols, index = std::move(index)](Node& self) {
        const NodePtr& px = parent(self, 0);
        if (!px->requires_grad) return;
        double* gx = px->grad_buffer().ptr();
        for (std::size_t i = 0; i < index.size(); ++i) {
          const double* g = self.grad.ptr() + i * cols;
          double* dst = gx + index[i] * cols;
          for (std::size_t c = 0; c < cols; ++c) dst[c] += g[c];
        }
      },
      "gather_rows");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.ptr() + r * widths[k], widths[k], out.ptr() + r * total + off);
    }
    off += widths[k];
  }
  return make_result(
      std::move(out), parts,
      [rows, total, widths = std::move(widths)](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          const NodePtr& p = parent(self, k);
          if (p->requires_grad) {
            double* g = p->grad_buffer().ptr();
            for (std::size_t r = 0; r < rows; ++r) {
              const double* src = self.grad.ptr() + r * total + off;
              for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += src[c];
            }
          }
          off += widths[k];
        }
      },
      "concat_cols");
}

Var softmax(const Var& logits) {
  const Tensor& lv = logits.value();
  if (lv.size() == 0) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(lv.storage().begin(), lv.storage().end());
  Tensor out(lv.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    out[i] = std::exp(lv[i] - mx);
    z += out[i];
  }
  for (double& v : out.storage()) v /= z;
  return make_result(
      std::move(out), {logits},
      [](Node& self) {
        const NodePtr& p = parent(self, 0);
        if (!p->requires_grad) return;
        const Tensor& s = self.value;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) dot += self.grad[i] * s[i];
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < s.size(); ++i) g[i] += s[i] * (self.grad[i] - dot);
      },
      "softmax");
}

Var scale_by(const Var& x, const Var& s, std::size_t k) {
  if (k >= s.value().size()) throw std::out_of_range("scale_by: index out of range");
  const double c = s.value()[k];
  Tensor out = x.value();
  for (double& v : out.storage()) v *= c;
  return make_result(
      std::move(out), {x, s},
      [k](Node& self) {
        const NodePtr& px = parent(self, 0);
        const NodePtr& ps = parent(self, 1);
        const double c = ps->value[k];
        if (px->requires_grad) {
          Tensor& g = px->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
        }
        if (ps->requires_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < px->value.size(); ++i) acc += self.grad[i] * px->value[i];
          ps->grad_buffer()[k] += acc;
        }
      },
      "scale_by");
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(
      std::move(out), {x},
      [](Node& self) {
        const NodePtr& p = parent(self, 0);
        if (!p->requires_grad) return;
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

// -- reductions / losses ---------------------------------------------------------

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().storage()) s += v;
  return make_result(
      Tensor::scalar(s), {x},
      [](Node& self) {
        const NodePtr& p = parent(self, 0);
        if (!p->requires_grad) return;
        const double g0 = self.grad[0];
        for (double& g : p->grad_buffer().storage()) g += g0;
      },
      "sum");
}

Var mean(const Var& x) {
  if (x.value().size() == 0) throw ShapeError("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var weighted_sum(const Var& x, const Tensor& w) {
  if (w.size() != x.value().size()) throw ShapeError("weighted_sum: weight size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x.value()[i];
  return make_result(
      Tensor::scalar(s), {x},
      [w](Node& self) {
        const NodePtr& p = parent(self, 0);
        if (!p->requires_grad) return;
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
      },
      "weighted_sum");
}

Var huber(const Var& pred, const Tensor& target, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber: delta must be > 0");
  if (pred.value().size() != target.size()) throw ShapeError("huber: size mismatch");
  require_finite(target, "huber");
  Tensor out(pred.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = huber_scalar(pred.value()[i] - target[i], delta);
  }
  return make_result(
      std::move(out), {pred},
      [target, delta](Node& self) {
        const NodePtr& p = parent(self, 0);
        if (!p->requires_grad) return;
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i] * huber_grad_scalar(p->value[i] - target[i], delta);
        }
      },
      "huber");
}

}  // namespace s2g::ad
