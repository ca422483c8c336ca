// SPDX-License-Identifier: Apache-2.0
#include "gam/autograd.hpp"

#include <atomic>
#include <cmath>

#include "gam/kernels.hpp"

namespace gam::ag {

namespace {
std::atomic<bool> g_fault{false};
constexpr kernels::Exec kExec = kernels::Exec::auto_dispatch;
}  // namespace

void set_fault_injection(bool on) { g_fault.store(on); }
bool fault_injection() { return g_fault.load(); }

void Node::add_grad(const Tensor& g) {
  check(g.same_shape(value), "gradient shape ", g.shape_str(),
        " does not match value shape ", value.shape_str(), " for op ", op);
  if (!grad.defined()) {
    grad = g;
    return;
  }
  double* pg = grad.data();
  const double* ps = g.data();
  for (int64_t i = 0; i < grad.numel(); ++i) pg[i] += ps[i];
}

Tensor& Node::grad_or_zeros() {
  if (!grad.defined()) grad = Tensor(value.shape());
  return grad;
}

Value Tape::leaf(Tensor v, bool requires_grad) {
  check(v.defined(), "leaf: undefined tensor");
  Node n;
  n.value = std::move(v);
  n.is_leaf = requires_grad;
  n.needs_grad = requires_grad;
  n.op = requires_grad ? "leaf" : "const";
  return adopt(std::move(n));
}

Value Tape::adopt(Node&& n) {
  auto v = std::make_shared<Node>(std::move(n));
  v->tape = this;
  v->index = static_cast<int>(nodes_.size());
  nodes_.push_back(v);
  return v;
}

void Tape::backward(const Value& root) {
  check(root && root->value.numel() == 1,
        "backward without a seed requires a scalar root");
  backward(root, Tensor::scalar(1.0));
}

void Tape::backward(const Value& root, const Tensor& seed) {
  check(static_cast<bool>(root), "backward: null root");
  check(root->tape == this, "backward: root was recorded on a different tape");
  check(seed.same_shape(root->value), "backward: seed shape ", seed.shape_str(),
        " does not match root shape ", root->value.shape_str());
  if (!root->needs_grad) return;
  root->add_grad(seed);
  for (int i = root->index; i >= 0; --i) {
    Node& n = *nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || !n.has_grad()) continue;
    if (n.backward_fn) n.backward_fn(n);
    if (!n.is_leaf) n.grad = Tensor();  // downstream of the walk; free eagerly
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n->grad = Tensor();
}

namespace {

Tape* require_tape(const char* op, std::initializer_list<const Value*> vs) {
  Tape* t = nullptr;
  for (const Value* v : vs) {
    check(static_cast<bool>(*v), op, ": null input value");
    Tape* vt = (*v)->tape;
    check(vt != nullptr, op, ": input has no tape");
    if (!t) t = vt;
    check(vt == t, op, ": inputs were recorded on different tapes");
  }
  return t;
}

bool any_needs_grad(const std::vector<Value>& ps) {
  for (const auto& p : ps)
    if (p->needs_grad) return true;
  return false;
}

Value make_op(const char* op, Tensor value, std::vector<Value> parents,
              std::function<void(Node&)> backward_fn) {
  Tape* t = parents.front()->tape;
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.op = op;
  n.needs_grad = any_needs_grad(n.parents);
  if (n.needs_grad) n.backward_fn = std::move(backward_fn);
  return t->adopt(std::move(n));
}

// Elementwise binary op scaffold; shapes must match exactly.
template <class FwdF, class BwdF>
Value binary_op(const char* op, const Value& a, const Value& b, FwdF&& fwd, BwdF&& bwd) {
  require_tape(op, {&a, &b});
  check(a->value.same_shape(b->value), op, ": shape mismatch ", a->value.shape_str(),
        " vs ", b->value.shape_str());
  Tensor out(a->value.shape());
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  return make_op(op, std::move(out), {a, b}, [bwd](Node& self) {
    Node& pa_ = *self.parents[0];
    Node& pb_ = *self.parents[1];
    const int64_t n_ = self.value.numel();
    const double* g = self.grad.data();
    const double* av = pa_.value.data();
    const double* bv = pb_.value.data();
    if (pa_.needs_grad) {
      double* ga = pa_.grad_or_zeros().data();
      for (int64_t i = 0; i < n_; ++i) ga[i] += bwd(av[i], bv[i], g[i], true);
    }
    if (pb_.needs_grad) {
      double* gb = pb_.grad_or_zeros().data();
      for (int64_t i = 0; i < n_; ++i) gb[i] += bwd(av[i], bv[i], g[i], false);
    }
  });
}

template <class FwdF, class BwdF>
Value unary_op(const char* op, const Value& a, FwdF&& fwd, BwdF&& bwd) {
  require_tape(op, {&a});
  Tensor out(a->value.shape());
  const double* pa = a->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = fwd(pa[i]);
  return make_op(op, std::move(out), {a}, [bwd](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const int64_t n = self.value.numel();
    const double* g = self.grad.data();
    const double* x = p.value.data();
    const double* y = self.value.data();
    double* gx = p.grad_or_zeros().data();
    for (int64_t i = 0; i < n; ++i) gx[i] += bwd(x[i], y[i], g[i]);
  });
}

}  // namespace

Value add(const Value& a, const Value& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, bool) { return g; });
}

Value sub(const Value& a, const Value& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, bool first) { return first ? g : -g; });
}

Value mul(const Value& a, const Value& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, bool first) { return first ? g * y : g * x; });
}

Value div(const Value& a, const Value& b) {
  require_tape("div", {&a, &b});
  const double* pb = b->value.data();
  for (int64_t i = 0; i < b->value.numel(); ++i)
    check(pb[i] != 0.0, "div: division by zero at flat index ", i);
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, bool first) {
        return first ? g / y : -g * x / (y * y);
      });
}

Value add_scalar(const Value& a, double c) {
  return unary_op(
      "add_scalar", a, [c](double x) { return x + c; },
      [](double, double, double g) { return g; });
}

Value mul_scalar(const Value& a, double c) {
  return unary_op(
      "mul_scalar", a, [c](double x) { return x * c; },
      [c](double, double, double g) { return g * c; });
}

Value one_minus(const Value& a) { return add_scalar(mul_scalar(a, -1.0), 1.0); }

Value relu(const Value& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double, double g) {
        const double f = fault_injection() ? 1.01 : 1.0;
        return x > 0.0 ? f * g : 0.0;
      });
}

Value ln(const Value& a) {
  require_tape("ln", {&a});
  const double* pa = a->value.data();
  for (int64_t i = 0; i < a->value.numel(); ++i)
    check(pa[i] > 0.0, "ln: non-positive input ", pa[i], " at flat index ", i);
  return unary_op(
      "ln", a, [](double x) { return std::log(x); },
      [](double x, double, double g) { return g / x; });
}

Value exp(const Value& a) {
  Value out = unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y, double g) { return g * y; });
  const double* po = out->value.data();
  for (int64_t i = 0; i < out->value.numel(); ++i)
    check(std::isfinite(po[i]), "exp: non-finite result at flat index ", i);
  return out;
}

Value softplus(const Value& a) {
  return unary_op(
      "softplus", a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double, double g) { return g / (1.0 + std::exp(-x)); });
}

Value clamp(const Value& a, double lo, double hi) {
  check(lo < hi, "clamp: lo ", lo, " must be below hi ", hi);
  return unary_op(
      "clamp", a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double, double g) { return (x > lo && x < hi) ? g : 0.0; });
}

Value channel_softmax(const Value& a) {
  require_tape("channel_softmax", {&a});
  check(a->value.ndim() == 3, "channel_softmax expects (H,W,C), got ",
        a->value.shape_str());
  const int64_t P = static_cast<int64_t>(a->value.dim(0)) * a->value.dim(1);
  const int C = a->value.dim(2);
  Tensor out(a->value.shape());
  kernels::softmax_rows_forward(a->value.data(), P, C, out.data(), kExec);
  return make_op("channel_softmax", std::move(out), {a}, [P, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    kernels::softmax_rows_backward(self.value.data(), self.grad.data(), P, C,
                                   p.grad_or_zeros().data(), kExec);
  });
}

Value sum(const Value& a) {
  require_tape("sum", {&a});
  Tensor out = Tensor::scalar(kernels::block_sum(a->value.data(), a->value.numel(), kExec));
  return make_op("sum", std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const double g = self.grad[0];
    double* gx = p.grad_or_zeros().data();
    for (int64_t i = 0; i < p.value.numel(); ++i) gx[i] += g;
  });
}

Value mean(const Value& a) {
  require_tape("mean", {&a});
  const double n = static_cast<double>(a->value.numel());
  Tensor out =
      Tensor::scalar(kernels::block_sum(a->value.data(), a->value.numel(), kExec) / n);
  return make_op("mean", std::move(out), {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const double g = self.grad[0] / n;
    double* gx = p.grad_or_zeros().data();
    for (int64_t i = 0; i < p.value.numel(); ++i) gx[i] += g;
  });
}

Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int dilation) {
  require_tape("conv2d", {&x, &w, &b});
  check(x->value.ndim() == 3, "conv2d: input must be (H,W,Cin), got ",
        x->value.shape_str());
  check(w->value.ndim() == 4, "conv2d: weights must be (k,k,Cin,Cout), got ",
        w->value.shape_str());
  check(w->value.dim(0) == w->value.dim(1), "conv2d: kernel must be square, got ",
        w->value.shape_str());
  check(w->value.dim(2) == x->value.dim(2), "conv2d: weight Cin ", w->value.dim(2),
        " does not match input channels ", x->value.dim(2));
  check(b->value.ndim() == 1 && b->value.dim(0) == w->value.dim(3),
        "conv2d: bias shape ", b->value.shape_str(), " does not match Cout ",
        w->value.dim(3));
  const auto s = kernels::conv2d_shape(x->value.dim(0), x->value.dim(1), x->value.dim(2),
                                       w->value.dim(0), w->value.dim(3), stride, dilation);
  Tensor out({s.Ho, s.Wo, s.Cout});
  kernels::conv2d_forward(s, x->value.data(), w->value.data(), b->value.data(),
                          out.data(), kExec);
  return make_op("conv2d", std::move(out), {x, w, b}, [s](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const double* gy = self.grad.data();
    if (px.needs_grad)
      kernels::conv2d_backward_input(s, gy, pw.value.data(), px.grad_or_zeros().data(),
                                     kExec);
    if (pw.needs_grad || pb.needs_grad)
      kernels::conv2d_backward_params(
          s, px.value.data(), gy,
          pw.needs_grad ? pw.grad_or_zeros().data() : nullptr,
          pb.needs_grad ? pb.grad_or_zeros().data() : nullptr, kExec);
  });
}

Value upsample2x(const Value& a) {
  require_tape("upsample2x", {&a});
  check(a->value.ndim() == 2 || a->value.ndim() == 3,
        "upsample2x expects rank 2 or 3, got ", a->value.shape_str());
  const int H = a->value.dim(0), W = a->value.dim(1);
  const int C = a->value.ndim() == 3 ? a->value.dim(2) : 1;
  Tensor out(a->value.ndim() == 3 ? std::vector<int>{2 * H, 2 * W, C}
                                  : std::vector<int>{2 * H, 2 * W});
  kernels::upsample2x_forward(a->value.data(), H, W, C, out.data(), kExec);
  return make_op("upsample2x", std::move(out), {a}, [H, W, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    kernels::upsample2x_backward(self.grad.data(), H, W, C, p.grad_or_zeros().data(),
                                 kExec);
  });
}

namespace {
void require_pixel_weights(const char* op, const Value& x, const Value& a) {
  check(x->value.ndim() == 3, op, ": features must be (H,W,D), got ",
        x->value.shape_str());
  check(a->value.ndim() == 2, op, ": weights must be (H,W), got ", a->value.shape_str());
  check(a->value.dim(0) == x->value.dim(0) && a->value.dim(1) == x->value.dim(1), op,
        ": weight grid ", a->value.shape_str(), " does not match features ",
        x->value.shape_str());
  const double* pa = a->value.data();
  for (int64_t i = 0; i < a->value.numel(); ++i)
    check(pa[i] >= 0.0, op, ": negative weight ", pa[i], " at flat index ", i);
}
}  // namespace

Value weighted_mean(const Value& x, const Value& a) {
  require_tape("weighted_mean", {&x, &a});
  require_pixel_weights("weighted_mean", x, a);
  const int64_t P = a->value.numel();
  const int D = x->value.dim(2);
  std::vector<double> sums(static_cast<size_t>(D) + 1, 0.0);
  kernels::weighted_mean_sums(x->value.data(), a->value.data(), P, D, sums.data(), kExec);
  const double S = sums[static_cast<size_t>(D)];
  check(S > 0.0, "weighted_mean: total weight is not positive");
  Tensor out({D});
  for (int d = 0; d < D; ++d) out[d] = sums[static_cast<size_t>(d)] / S;
  return make_op("weighted_mean", std::move(out), {x, a}, [P, D, S](Node& self) {
    Node& px = *self.parents[0];
    Node& pa = *self.parents[1];
    const double* g = self.grad.data();
    const double* xv = px.value.data();
    const double* av = pa.value.data();
    const double* mu = self.value.data();
    if (px.needs_grad) {
      double* gx = px.grad_or_zeros().data();
      kernels::for_each(
          P,
          [&](int64_t p) {
            const double w = av[p] / S;
            for (int d = 0; d < D; ++d) gx[p * D + d] += g[d] * w;
          },
          kExec);
    }
    if (pa.needs_grad) {
      double* ga = pa.grad_or_zeros().data();
      kernels::for_each(
          P,
          [&](int64_t p) {
            double acc = 0.0;
            for (int d = 0; d < D; ++d) acc += g[d] * (xv[p * D + d] - mu[d]);
            ga[p] += acc / S;
          },
          kExec);
    }
  });
}

Value weighted_var(const Value& x, const Value& a, const Value& mu, const Value& r) {
  require_tape("weighted_var", {&x, &a, &mu, &r});
  require_pixel_weights("weighted_var", x, a);
  const int D = x->value.dim(2);
  check(mu->value.ndim() == 1 && mu->value.dim(0) == D, "weighted_var: mu shape ",
        mu->value.shape_str(), " does not match feature dim ", D);
  check(r->value.ndim() == 1 && r->value.dim(0) == D, "weighted_var: r shape ",
        r->value.shape_str(), " does not match feature dim ", D);
  const int64_t P = a->value.numel();
  std::vector<double> sq(static_cast<size_t>(D), 0.0);
  kernels::weighted_sqdev_sums(x->value.data(), a->value.data(), mu->value.data(), P, D,
                               sq.data(), kExec);
  const double S = kernels::block_sum(a->value.data(), P, kExec);
  check(S > 0.0, "weighted_var: total weight is not positive");
  Tensor out({D});
  for (int d = 0; d < D; ++d) out[d] = sq[static_cast<size_t>(d)] / S + r->value[d];
  std::vector<double> sq_over_S(static_cast<size_t>(D));
  for (int d = 0; d < D; ++d) sq_over_S[static_cast<size_t>(d)] = sq[static_cast<size_t>(d)] / S;
  return make_op(
      "weighted_var", std::move(out), {x, a, mu, r}, [P, D, S, sq_over_S](Node& self) {
        Node& px = *self.parents[0];
        Node& pa = *self.parents[1];
        Node& pmu = *self.parents[2];
        Node& pr = *self.parents[3];
        const double* g = self.grad.data();
        const double* xv = px.value.data();
        const double* av = pa.value.data();
        const double* muv = pmu.value.data();
        if (px.needs_grad) {
          double* gx = px.grad_or_zeros().data();
          kernels::for_each(
              P,
              [&](int64_t p) {
                const double w = 2.0 * av[p] / S;
                for (int d = 0; d < D; ++d)
                  gx[p * D + d] += g[d] * w * (xv[p * D + d] - muv[d]);
              },
              kExec);
        }
        if (pa.needs_grad) {
          double* ga = pa.grad_or_zeros().data();
          kernels::for_each(
              P,
              [&](int64_t p) {
                double acc = 0.0;
                for (int d = 0; d < D; ++d) {
                  const double diff = xv[p * D + d] - muv[d];
                  acc += g[d] * (diff * diff - sq_over_S[static_cast<size_t>(d)]);
                }
                ga[p] += acc / S;
              },
              kExec);
        }
        if (pmu.needs_grad) {
          // sum_p a_p (x_pd - mu_d), blocked like every other reduction
          std::vector<double> t(static_cast<size_t>(D), 0.0);
          kernels::block_accum(
              P, D,
              [&](int64_t p, double* acc) {
                const double ap = av[p];
                for (int d = 0; d < D; ++d) acc[d] += ap * (xv[p * D + d] - muv[d]);
              },
              t.data(), kExec);
          double* gmu = pmu.grad_or_zeros().data();
          for (int d = 0; d < D; ++d) gmu[d] += g[d] * (-2.0 / S) * t[static_cast<size_t>(d)];
        }
        if (pr.needs_grad) {
          double* gr = pr.grad_or_zeros().data();
          for (int d = 0; d < D; ++d) gr[d] += g[d];
        }
      });
}

Value gauss_score(const Value& x, const Value& mu, const Value& var) {
  require_tape("gauss_score", {&x, &mu, &var});
  check(x->value.ndim() == 3, "gauss_score: features must be (H,W,D), got ",
        x->value.shape_str());
  const int D = x->value.dim(2);
  check(mu->value.ndim() == 1 && mu->value.dim(0) == D, "gauss_score: mu shape ",
        mu->value.shape_str(), " does not match feature dim ", D);
  check(var->value.ndim() == 1 && var->value.dim(0) == D, "gauss_score: var shape ",
        var->value.shape_str(), " does not match feature dim ", D);
  const double* pv = var->value.data();
  for (int d = 0; d < D; ++d)
    check(pv[d] > 0.0, "gauss_score: variance entry ", pv[d], " at dim ", d,
          " is not positive");
  const int64_t P = static_cast<int64_t>(x->value.dim(0)) * x->value.dim(1);
  Tensor out({x->value.dim(0), x->value.dim(1)});
  kernels::gauss_scores_forward(x->value.data(), P, D, mu->value.data(),
                                var->value.data(), out.data(), kExec);
  return make_op("gauss_score", std::move(out), {x, mu, var}, [P, D](Node& self) {
    Node& px = *self.parents[0];
    Node& pmu = *self.parents[1];
    Node& pvar = *self.parents[2];
    kernels::gauss_scores_backward(
        px.value.data(), P, D, pmu.value.data(), pvar.value.data(), self.grad.data(),
        px.needs_grad ? px.grad_or_zeros().data() : nullptr,
        pmu.needs_grad ? pmu.grad_or_zeros().data() : nullptr,
        pvar.needs_grad ? pvar.grad_or_zeros().data() : nullptr, kExec);
  });
}

Value ema_blend(const Value& prev, const Value& next, double lambda) {
  require_tape("ema_blend", {&prev, &next});
  check(prev->value.same_shape(next->value), "ema_blend: shape mismatch ",
        prev->value.shape_str(), " vs ", next->value.shape_str());
  check(lambda >= 0.0 && lambda <= 1.0, "ema_blend: lambda ", lambda,
        " outside [0,1]");
  // Exact endpoints: no arithmetic may touch the passed-through tensor.
  Tensor out;
  if (lambda == 0.0) {
    out = prev->value;
  } else if (lambda == 1.0) {
    out = next->value;
  } else {
    out = Tensor(prev->value.shape());
    const double* pp = prev->value.data();
    const double* pn = next->value.data();
    double* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i)
      po[i] = (1.0 - lambda) * pp[i] + lambda * pn[i];
  }
  return make_op("ema_blend", std::move(out), {prev, next}, [lambda](Node& self) {
    Node& pp = *self.parents[0];
    Node& pn = *self.parents[1];
    const double* g = self.grad.data();
    const int64_t n = self.value.numel();
    if (pp.needs_grad && lambda < 1.0) {
      double* gp = pp.grad_or_zeros().data();
      for (int64_t i = 0; i < n; ++i) gp[i] += (1.0 - lambda) * g[i];
    }
    if (pn.needs_grad && lambda > 0.0) {
      double* gn = pn.grad_or_zeros().data();
      for (int64_t i = 0; i < n; ++i) gn[i] += lambda * g[i];
    }
  });
}

Value stop_gradient(const Value& a) {
  require_tape("stop_gradient", {&a});
  Node n;
  n.value = a->value;
  n.parents = {a};
  n.op = "stop_gradient";
  n.needs_grad = false;  // barrier: nothing upstream receives gradient
  return a->tape->adopt(std::move(n));
}

Value concat_channels(const std::vector<Value>& xs) {
  check(!xs.empty(), "concat_channels: no inputs");
  std::vector<const Value*> ptrs;
  for (const auto& v : xs) ptrs.push_back(&v);
  Tape* tape = nullptr;
  for (const Value* v : ptrs) {
    check(static_cast<bool>(*v), "concat_channels: null input");
    if (!tape) tape = (*v)->tape;
    check((*v)->tape == tape, "concat_channels: inputs on different tapes");
  }
  const int H = xs[0]->value.dim(0);
  const int W = xs[0]->value.ndim() >= 2 ? xs[0]->value.dim(1) : 1;
  int Ctot = 0;
  std::vector<int> widths;
  for (const auto& v : xs) {
    check(v->value.ndim() == 2 || v->value.ndim() == 3,
          "concat_channels: inputs must be rank 2 or 3, got ", v->value.shape_str());
    check(v->value.dim(0) == H && v->value.dim(1) == W,
          "concat_channels: grid mismatch ", v->value.shape_str());
    const int c = v->value.ndim() == 3 ? v->value.dim(2) : 1;
    widths.push_back(c);
    Ctot += c;
  }
  Tensor out({H, W, Ctot});
  const int64_t P = static_cast<int64_t>(H) * W;
  int base = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double* src = xs[i]->value.data();
    const int c = widths[i];
    double* dst = out.data();
    for (int64_t p = 0; p < P; ++p)
      for (int j = 0; j < c; ++j) dst[p * Ctot + base + j] = src[p * c + j];
    base += c;
  }
  return make_op("concat_channels", std::move(out), xs, [P, Ctot, widths](Node& self) {
    const double* g = self.grad.data();
    int base_ = 0;
    for (size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      const int c = widths[i];
      if (p.needs_grad) {
        double* gp = p.grad_or_zeros().data();
        for (int64_t q = 0; q < P; ++q)
          for (int j = 0; j < c; ++j) gp[q * c + j] += g[q * Ctot + base_ + j];
      }
      base_ += c;
    }
  });
}

Value slice_channels(const Value& x, int from, int count) {
  require_tape("slice_channels", {&x});
  check(x->value.ndim() == 3, "slice_channels expects (H,W,C), got ",
        x->value.shape_str());
  const int C = x->value.dim(2);
  check(from >= 0 && count >= 1 && from + count <= C, "slice_channels: range [", from,
        ",", from + count, ") outside ", C, " channels");
  const int H = x->value.dim(0), W = x->value.dim(1);
  const int64_t P = static_cast<int64_t>(H) * W;
  Tensor out({H, W, count});
  const double* src = x->value.data();
  for (int64_t p = 0; p < P; ++p)
    for (int j = 0; j < count; ++j) out[p * count + j] = src[p * C + from + j];
  return make_op("slice_channels", std::move(out), {x}, [P, C, from, count](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const double* g = self.grad.data();
    double* gp = p.grad_or_zeros().data();
    for (int64_t q = 0; q < P; ++q)
      for (int j = 0; j < count; ++j) gp[q * C + from + j] += g[q * count + j];
  });
}

Value channel(const Value& x, int c) {
  require_tape("channel", {&x});
  check(x->value.ndim() == 3, "channel expects (H,W,C), got ", x->value.shape_str());
  const int C = x->value.dim(2);
  check(c >= 0 && c < C, "channel index ", c, " outside ", C, " channels");
  const int H = x->value.dim(0), W = x->value.dim(1);
  const int64_t P = static_cast<int64_t>(H) * W;
  Tensor out({H, W});
  const double* src = x->value.data();
  for (int64_t p = 0; p < P; ++p) out[p] = src[p * C + c];
  return make_op("channel", std::move(out), {x}, [P, C, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const double* g = self.grad.data();
    double* gp = p.grad_or_zeros().data();
    for (int64_t q = 0; q < P; ++q) gp[q * C + c] += g[q];
  });
}

Value cross_entropy(const Value& probs, const Tensor& target) {
  require_tape("cross_entropy", {&probs});
  check(probs->value.ndim() == 3, "cross_entropy: probs must be (H,W,C), got ",
        probs->value.shape_str());
  check(target.ndim() == 2, "cross_entropy: target must be (H,W), got ",
        target.shape_str());
  check(target.dim(0) == probs->value.dim(0) && target.dim(1) == probs->value.dim(1),
        "cross_entropy: target grid ", target.shape_str(), " does not match probs ",
        probs->value.shape_str());
  const int C = probs->value.dim(2);
  const int64_t P = target.numel();
  constexpr double floor = 1e-12;
  std::vector<int> idx(static_cast<size_t>(P));
  for (int64_t p = 0; p < P; ++p) {
    const double t = target[p];
    check(t == std::floor(t) && t >= 0.0 && t < C, "cross_entropy: target value ", t,
          " at flat index ", p, " is not a class index below ", C);
    idx[static_cast<size_t>(p)] = static_cast<int>(t);
  }
  const double* pv = probs->value.data();
  double nll = 0.0;
  kernels::block_accum(
      P, 1,
      [&](int64_t p, double* acc) {
        acc[0] -= std::log(std::max(pv[p * C + idx[static_cast<size_t>(p)]], floor));
      },
      &nll, kExec);
  Tensor out = Tensor::scalar(nll / static_cast<double>(P));
  return make_op("cross_entropy", std::move(out), {probs},
                 [P, C, idx = std::move(idx)](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.needs_grad) return;
                   const double g = self.grad[0] / static_cast<double>(P);
                   const double* pv_ = p.value.data();
                   double* gp = p.grad_or_zeros().data();
                   for (int64_t q = 0; q < P; ++q) {
                     const int t = idx[static_cast<size_t>(q)];
                     const double v = pv_[q * C + t];
                     if (v > floor) gp[q * C + t] -= g / v;
                   }
                 });
}

Value record(const std::string& op_tag, const std::vector<Value>& inputs,
             const OpAttrs& attrs) {
  auto arity = [&](size_t n) {
    check(inputs.size() == n, "record('", op_tag, "') expects ", n, " inputs, got ",
          inputs.size());
  };
  if (op_tag == "add") { arity(2); return add(inputs[0], inputs[1]); }
  if (op_tag == "sub") { arity(2); return sub(inputs[0], inputs[1]); }
  if (op_tag == "mul") { arity(2); return mul(inputs[0], inputs[1]); }
  if (op_tag == "div") { arity(2); return div(inputs[0], inputs[1]); }
  if (op_tag == "add_scalar") { arity(1); return add_scalar(inputs[0], attrs.scalar); }
  if (op_tag == "mul_scalar") { arity(1); return mul_scalar(inputs[0], attrs.scalar); }
  if (op_tag == "relu") { arity(1); return relu(inputs[0]); }
  if (op_tag == "ln") { arity(1); return ln(inputs[0]); }
  if (op_tag == "exp") { arity(1); return exp(inputs[0]); }
  if (op_tag == "softplus") { arity(1); return softplus(inputs[0]); }
  if (op_tag == "clamp") { arity(1); return clamp(inputs[0], attrs.lo, attrs.hi); }
  if (op_tag == "channel_softmax") { arity(1); return channel_softmax(inputs[0]); }
  if (op_tag == "sum") { arity(1); return sum(inputs[0]); }
  if (op_tag == "mean") { arity(1); return mean(inputs[0]); }
  if (op_tag == "conv2d") {
    arity(3);
    return conv2d(inputs[0], inputs[1], inputs[2], attrs.stride, attrs.dilation);
  }
  if (op_tag == "upsample2x") { arity(1); return upsample2x(inputs[0]); }
  if (op_tag == "weighted_mean") { arity(2); return weighted_mean(inputs[0], inputs[1]); }
  if (op_tag == "weighted_var") {
    arity(4);
    return weighted_var(inputs[0], inputs[1], inputs[2], inputs[3]);
  }
  if (op_tag == "gauss_score") {
    arity(3);
    return gauss_score(inputs[0], inputs[1], inputs[2]);
  }
  if (op_tag == "ema_blend") {
    arity(2);
    return ema_blend(inputs[0], inputs[1], attrs.lambda);
  }
  if (op_tag == "stop_gradient") { arity(1); return stop_gradient(inputs[0]); }
  if (op_tag == "concat_channels") { return concat_channels(inputs); }
  if (op_tag == "channel") { arity(1); return channel(inputs[0], attrs.channel); }
  if (op_tag == "slice_channels") {
    arity(1);
    return slice_channels(inputs[0], attrs.from, attrs.count);
  }
  if (op_tag == "cross_entropy") { arity(1); return cross_entropy(inputs[0], attrs.target); }
  fail("record: unknown op tag '", op_tag, "'");
}

const std::vector<std::string>& op_tags() {
  static const std::vector<std::string> tags = {
      "add",        "sub",           "mul",           "div",         "add_scalar",
      "mul_scalar", "relu",          "ln",            "exp",         "softplus",
      "clamp",      "channel_softmax", "sum",         "mean",        "conv2d",
      "upsample2x", "weighted_mean", "weighted_var",  "gauss_score", "ema_blend",
      "stop_gradient", "concat_channels", "channel",  "slice_channels",
      "cross_entropy"};
  return tags;
}

}  // namespace gam::ag
