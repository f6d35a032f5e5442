#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Var is a handle to a node in a dynamically built value graph. Each op
// produces a new node holding its value, its parents and a closure that
// pushes the node's gradient into the parents. Graphs are acyclic by
// construction (a node can only reference nodes that already exist).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "s2g/core/rng.hpp"
#include "s2g/core/tensor.hpp"

namespace s2g::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  std::string_view op = "leaf";

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  /// Gradient (zeros if backward has not reached this node).
  Tensor grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad();

  const NodePtr& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

 private:
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  friend Var make_result(Tensor, std::vector<Var>, std::function<void(Node&)>, std::string_view);

  NodePtr node_;
};

/// Builds an op result. Output is checked for finiteness; parents are only
/// retained when at least one of them requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn,
                std::string_view op);

/// Accumulate `g` into `n`'s gradient if `n` tracks gradients.
void accumulate(const NodePtr& n, const Tensor& g);

/// Runs the reverse sweep from a scalar root (size-1 tensor).
void backward(const Var& root);

// -- elementwise / arithmetic ------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

/// x[..., j] + bias[j]
Var add_bias(const Var& x, const Var& bias);
/// x (rows x K) @ w (K x N); leading dims of x are kept.
Var matmul(const Var& x, const Var& w);
/// x @ w + b
Var linear(const Var& x, const Var& w, const Var& b);

Var gelu(const Var& x);
Var relu(const Var& x);
Var silu(const Var& x);
Var softplus(const Var& x);

// -- normalizations ----------------------------------------------------------

Var rms_norm(const Var& x, const Var& gain, double eps);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
};

/// Normalizes each column over the row axis. Training mode uses batch
/// statistics and updates the running estimates; eval mode uses the
/// running estimates only.
Var batch_norm(const Var& x, const Var& gain, const Var& bias, BatchNormState& state,
               bool training, double eps = 1e-5);

/// Inverted dropout. Identity when !training or rate == 0.
Var dropout(const Var& x, double rate, Rng& rng, bool training);

// -- structural ---------------------------------------------------------------

/// out[i, :] = x[idx[i], :] (x viewed as rows x cols).
Var gather_rows(const Var& x, std::span<const std::size_t> idx);
Var concat_cols(const std::vector<Var>& parts);
/// 1-D softmax.
Var softmax(const Var& logits);
/// x * s[k] where s is a 1-D Var.
Var scale_by(const Var& x, const Var& s, std::size_t k);
Var reshape(const Var& x, Shape shape);

// -- reductions / losses --------------------------------------------------------

Var sum(const Var& x);
Var mean(const Var& x);
/// sum_i w[i] * x[i]
Var weighted_sum(const Var& x, const Tensor& w);
/// Elementwise Huber between pred and a constant target.
Var huber(const Var& pred, const Tensor& target, double delta);

// -- scalar primitives shared with tests / plain-tensor callers -----------------

double gelu_scalar(double x);
double gelu_grad_scalar(double x);
double softplus_scalar(double x);
double sigmoid_scalar(double x);
double huber_scalar(double residual, double delta);
double huber_grad_scalar(double residual, double delta);

// Plain-tensor conveniences.
Tensor gelu(const Tensor& x);
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps);

}  // namespace s2g::ad
