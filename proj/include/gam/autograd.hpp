// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gam/tensor.hpp"

namespace gam::ag {

class Tape;
struct Node;
using Value = std::shared_ptr<Node>;

// One recorded operation (or leaf) in the computation graph. Nodes are
// created through Tape::leaf / Tape::constant and the op functions below;
// they are owned by their tape in creation order, which is also a valid
// topological order for the backward walk.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first contribution, zeros otherwise
  std::vector<Value> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  Tape* tape = nullptr;
  int index = -1;
  bool is_leaf = false;     // gradient target (parameter or checked input)
  bool needs_grad = false;  // some leaf upstream requires a gradient

  void add_grad(const Tensor& g);
  bool has_grad() const { return grad.defined(); }
  Tensor& grad_or_zeros();
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Tensor v, bool requires_grad = true);
  Value constant(Tensor v) { return leaf(std::move(v), false); }

  // Reverse pass from root, seeded with d(out)/d(root) = seed. Gradients of
  // leaves accumulate across calls; non-leaf gradients are freed as the walk
  // passes them. Calling with a scalar root uses seed = [1].
  void backward(const Value& root, const Tensor& seed);
  void backward(const Value& root);

  void zero_grad();
  size_t size() const { return nodes_.size(); }

  // Internal: append a finished node and assign its index.
  Value adopt(Node&& n);

 private:
  std::vector<Value> nodes_;
};

// ---- op library ----
// Every function validates shapes and tape identity and throws gam::error
// with the op name on misuse. Elementwise ops require exact shape matches.

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);  // any zero divisor entry throws
Value add_scalar(const Value& a, double c);
Value mul_scalar(const Value& a, double c);
Value one_minus(const Value& a);  // 1 - a

Value relu(const Value& a);
Value ln(const Value& a);   // any non-positive entry throws
Value exp(const Value& a);  // non-finite results throw
Value softplus(const Value& a);
Value clamp(const Value& a, double lo, double hi);

Value channel_softmax(const Value& a);  // (H,W,C), softmax over C
Value sum(const Value& a);              // -> [1]
Value mean(const Value& a);             // -> [1]

Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int dilation);
Value upsample2x(const Value& a);

// Assignment-weighted statistics over the pixels of x: (H,W,D) features
// weighted by an (H,W) nonnegative map. weighted_mean fails when the total
// weight is not positive; callers gate degenerate components beforehand.
Value weighted_mean(const Value& x, const Value& a);
// sum_p a_p (x_p - mu)^2 / sum_p a_p + r, elementwise over D.
Value weighted_var(const Value& x, const Value& a, const Value& mu, const Value& r);

// Per-pixel diagonal-covariance Gaussian log score (H,W); var must be
// strictly positive.
Value gauss_score(const Value& x, const Value& mu, const Value& var);

// (1 - lambda) * prev + lambda * next, with the lambda = 0 / 1 endpoints
// returning the corresponding input bit-exactly. lambda outside [0,1] throws.
Value ema_blend(const Value& prev, const Value& next, double lambda);

Value stop_gradient(const Value& a);

// Channel concatenation of (H,W,Ci) and (H,W) inputs (the latter count as
// one channel); output is (H,W, sum Ci).
Value concat_channels(const std::vector<Value>& xs);
Value channel(const Value& x, int c);                       // (H,W,C) -> (H,W)
Value slice_channels(const Value& x, int from, int count);  // -> (H,W,count)

// Mean negative log-likelihood of integer targets (H,W) under per-pixel
// distributions (H,W,C); probabilities are floored at 1e-12 inside the log.
Value cross_entropy(const Value& probs, const Tensor& target);

// ---- generic dispatch ----
// String-tagged entry point over the same op set; unknown tags throw.
struct OpAttrs {
  double scalar = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double lambda = 0.0;
  int stride = 1;
  int dilation = 1;
  int from = 0;
  int count = 0;
  int channel = 0;
  Tensor target;
};
Value record(const std::string& op_tag, const std::vector<Value>& inputs,
             const OpAttrs& attrs = {});
const std::vector<std::string>& op_tags();

// Deliberate backward-pass corruption (relu gradients scaled by 1.01) used
// as a negative control for the gradient checker.
void set_fault_injection(bool on);
bool fault_injection();

}  // namespace gam::ag
