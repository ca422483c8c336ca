// SPDX-License-Identifier: Apache-2.0
#include "gam/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gam/kernels.hpp"
#include "gam/rng.hpp"

namespace gam::ag {

namespace {

double eval_scalar(const GradCheckProblem& p, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, false));
  Value root = p.forward(tape, leaves);
  check(root->value.numel() == 1, "grad_check: problem '", p.name,
        "' must produce a scalar, got ", root->value.shape_str());
  return root->value[0];
}

}  // namespace

GradCheckReport grad_check(const GradCheckProblem& p, double h, int max_coords_per_input,
                           uint64_t seed) {
  check(!p.inputs.empty(), "grad_check: problem '", p.name, "' has no inputs");
  // Analytic pass.
  Tape tape;
  std::vector<Value> leaves;
  for (const auto& t : p.inputs) leaves.push_back(tape.leaf(t, true));
  Value root = p.forward(tape, leaves);
  check(root->value.numel() == 1, "grad_check: problem '", p.name,
        "' must produce a scalar, got ", root->value.shape_str());
  tape.backward(root);
  std::vector<Tensor> analytic;
  for (auto& l : leaves)
    analytic.push_back(l->has_grad() ? l->grad : Tensor(l->value.shape()));

  GradCheckReport rep;
  const double f0 = root->value[0];
  // One-sided difference agreement, relative to the larger one-sided slope.
  // On a smooth stretch the two sides differ by ~step * |f''/f'|, well below
  // kSmoothGap at these scales; a straddled corner shows the slope jump
  // itself, and a jump big enough to corrupt the central difference beyond
  // the checking tolerance is twice that tolerance here. Gaps above
  // kCornerGap are corners outright; the band in between is re-measured at
  // a 64x smaller step, which steps clear of a straddled corner (the gap
  // collapses and the new slope is clean) but not of a corner pinned at the
  // point itself, which keeps its gap and is excluded.
  constexpr double kCornerGap = 1e-2;
  constexpr double kSmoothGap = 2e-4;
  Rng rng(seed);
  std::vector<Tensor> work = p.inputs;
  for (size_t i = 0; i < p.inputs.size(); ++i) {
    const int64_t n = p.inputs[i].numel();
    std::vector<int64_t> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords_per_input > 0 && n > max_coords_per_input) {
      rng.shuffle(coords);
      coords.resize(static_cast<size_t>(max_coords_per_input));
      std::sort(coords.begin(), coords.end());
    }
    for (int64_t j : coords) {
      const double x0 = work[i][j];
      double numeric = 0.0;
      auto one_sided_gap = [&](double step) {
        work[i][j] = x0 + step;
        const double fp = eval_scalar(p, work);
        work[i][j] = x0 - step;
        const double fm = eval_scalar(p, work);
        work[i][j] = x0;
        numeric = (fp - fm) / (2.0 * step);
        const double dplus = (fp - f0) / step;
        const double dminus = (f0 - fm) / step;
        return std::abs(dplus - dminus) /
               std::max({std::abs(dplus), std::abs(dminus), 1e-8});
      };
      double gap = one_sided_gap(h);
      if (gap > kSmoothGap && gap <= kCornerGap) gap = one_sided_gap(h / 64.0);
      if (gap > kSmoothGap) {
        ++rep.coords_skipped;
        continue;
      }
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input[" + std::to_string(i) + "][" + std::to_string(j) + "]";
      }
    }
  }
  return rep;
}

namespace {

Tensor rand_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Uniform in [lo, hi] but at least `margin` away from every value in `avoid`;
// keeps randomized inputs off relu/clamp kinks.
Tensor rand_tensor_away(Rng& rng, std::vector<int> shape, double lo, double hi,
                        const std::vector<double>& avoid, double margin) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v;
    bool ok;
    do {
      v = rng.uniform(lo, hi);
      ok = true;
      for (double a : avoid)
        if (std::abs(v - a) < margin) ok = false;
    } while (!ok);
    t[i] = v;
  }
  return t;
}

// Scalar readout sum(z * c) with a fixed random weight tensor, so every
// output coordinate influences the root with a distinct coefficient.
std::function<Value(Tape&, Value)> make_readout(Rng& rng, std::vector<int> shape) {
  Tensor c = rand_tensor(rng, std::move(shape), -1.0, 1.0);
  return [c](Tape& tape, Value z) { return sum(mul(z, tape.constant(c))); };
}

}  // namespace

std::vector<GradCheckProblem> op_suite(uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckProblem> out;

  auto add_case = [&](std::string name, std::vector<Tensor> inputs,
                      std::function<Value(Tape&, const std::vector<Value>&)> fwd) {
    out.push_back({std::move(name), std::move(inputs), std::move(fwd)});
  };

  {
    auto ro = make_readout(rng, {5, 4});
    add_case("add", {rand_tensor(rng, {5, 4}, -1, 1), rand_tensor(rng, {5, 4}, -1, 1)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, add(in[0], in[1]));
             });
  }
  {
    auto ro = make_readout(rng, {5, 4});
    add_case("sub", {rand_tensor(rng, {5, 4}, -1, 1), rand_tensor(rng, {5, 4}, -1, 1)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, sub(in[0], in[1]));
             });
  }
  {
    auto ro = make_readout(rng, {4, 3, 2});
    add_case("mul",
             {rand_tensor(rng, {4, 3, 2}, -1, 1), rand_tensor(rng, {4, 3, 2}, -1, 1)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, mul(in[0], in[1]));
             });
  }
  {
    auto ro = make_readout(rng, {4, 3});
    add_case("div",
             {rand_tensor(rng, {4, 3}, -1, 1), rand_tensor(rng, {4, 3}, 0.4, 1.6)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, div(in[0], in[1]));
             });
  }
  {
    auto ro = make_readout(rng, {4, 4});
    const double c = rng.uniform(-2, 2);
    add_case("add_scalar", {rand_tensor(rng, {4, 4}, -1, 1)},
             [ro, c](Tape& t, const std::vector<Value>& in) {
               return ro(t, add_scalar(in[0], c));
             });
  }
  {
    auto ro = make_readout(rng, {4, 4});
    const double c = rng.uniform(-2, 2);
    add_case("mul_scalar", {rand_tensor(rng, {4, 4}, -1, 1)},
             [ro, c](Tape& t, const std::vector<Value>& in) {
               return ro(t, mul_scalar(in[0], c));
             });
  }
  {
    auto ro = make_readout(rng, {5, 5});
    add_case("relu", {rand_tensor_away(rng, {5, 5}, -1, 1, {0.0}, 0.05)},
             [ro](Tape& t, const std::vector<Value>& in) { return ro(t, relu(in[0])); });
  }
  {
    auto ro = make_readout(rng, {4, 3});
    add_case("ln", {rand_tensor(rng, {4, 3}, 0.2, 2.2)},
             [ro](Tape& t, const std::vector<Value>& in) { return ro(t, ln(in[0])); });
  }
  {
    auto ro = make_readout(rng, {4, 3});
    add_case("exp", {rand_tensor(rng, {4, 3}, -2, 2)},
             [ro](Tape& t, const std::vector<Value>& in) { return ro(t, exp(in[0])); });
  }
  {
    auto ro = make_readout(rng, {4, 4});
    add_case("softplus", {rand_tensor(rng, {4, 4}, -3, 3)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, softplus(in[0]));
             });
  }
  {
    auto ro = make_readout(rng, {5, 4});
    add_case("clamp", {rand_tensor_away(rng, {5, 4}, -1, 1, {-0.5, 0.5}, 0.05)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, clamp(in[0], -0.5, 0.5));
             });
  }
  {
    auto ro = make_readout(rng, {4, 3, 4});
    add_case("channel_softmax", {rand_tensor(rng, {4, 3, 4}, -2, 2)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, channel_softmax(in[0]));
             });
  }
  {
    const double c = rng.uniform(0.5, 1.5);
    add_case("sum", {rand_tensor(rng, {5, 3}, -1, 1)},
             [c](Tape&, const std::vector<Value>& in) {
               return mul_scalar(sum(in[0]), c);
             });
    add_case("mean", {rand_tensor(rng, {5, 3}, -1, 1)},
             [c](Tape&, const std::vector<Value>& in) {
               return mul_scalar(mean(in[0]), c);
             });
  }
  for (int stride : {1, 2}) {
    for (int dil : {1, 2}) {
      const int H = 6, W = 5, Cin = 3, Cout = 4, k = 3;
      const auto s = kernels::conv2d_shape(H, W, Cin, k, Cout, stride, dil);
      auto ro = make_readout(rng, {s.Ho, s.Wo, Cout});
      add_case("conv2d_s" + std::to_string(stride) + "d" + std::to_string(dil),
               {rand_tensor(rng, {H, W, Cin}, -1, 1),
                rand_tensor(rng, {k, k, Cin, Cout}, -0.6, 0.6),
                rand_tensor(rng, {Cout}, -0.3, 0.3)},
               [ro, stride, dil](Tape& t, const std::vector<Value>& in) {
                 return ro(t, conv2d(in[0], in[1], in[2], stride, dil));
               });
    }
  }
  {
    auto ro = make_readout(rng, {6, 8, 2});
    add_case("upsample2x", {rand_tensor(rng, {3, 4, 2}, -1, 1)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, upsample2x(in[0]));
             });
  }
  {
    auto ro = make_readout(rng, {3});
    add_case("weighted_mean",
             {rand_tensor(rng, {5, 4, 3}, -1, 1), rand_tensor(rng, {5, 4}, 0.1, 1.0)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, weighted_mean(in[0], in[1]));
             });
  }
  {
    auto ro = make_readout(rng, {3});
    add_case("weighted_var",
             {rand_tensor(rng, {5, 4, 3}, -1, 1), rand_tensor(rng, {5, 4}, 0.1, 1.0),
              rand_tensor(rng, {3}, -0.5, 0.5), rand_tensor(rng, {3}, 0.05, 0.3)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, weighted_var(in[0], in[1], in[2], in[3]));
             });
  }
  {
    auto ro = make_readout(rng, {4, 4});
    add_case("gauss_score",
             {rand_tensor(rng, {4, 4, 3}, -1, 1), rand_tensor(rng, {3}, -0.5, 0.5),
              rand_tensor(rng, {3}, 0.3, 1.5)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, gauss_score(in[0], in[1], in[2]));
             });
  }
  for (double lambda : {0.0, 0.3, 1.0}) {
    auto ro = make_readout(rng, {4, 3});
    std::string suffix = lambda == 0.0 ? "0" : (lambda == 1.0 ? "1" : "mid");
    add_case("ema_blend_" + suffix,
             {rand_tensor(rng, {4, 3}, -1, 1), rand_tensor(rng, {4, 3}, -1, 1)},
             [ro, lambda](Tape& t, const std::vector<Value>& in) {
               return ro(t, ema_blend(in[0], in[1], lambda));
             });
  }
  {
    // The stopped branch enters with coefficient zero, so analytic and
    // numeric must both see only the live branch.
    auto ro = make_readout(rng, {4, 4});
    add_case("stop_gradient", {rand_tensor(rng, {4, 4}, -2, 2)},
             [ro](Tape& t, const std::vector<Value>& in) {
               Value blocked = mul_scalar(stop_gradient(exp(in[0])), 0.0);
               return ro(t, add(exp(in[0]), blocked));
             });
  }
  {
    auto ro = make_readout(rng, {4, 3, 4});
    add_case("concat_channels",
             {rand_tensor(rng, {4, 3, 2}, -1, 1), rand_tensor(rng, {4, 3}, -1, 1),
              rand_tensor(rng, {4, 3, 1}, -1, 1)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, concat_channels({in[0], in[1], in[2]}));
             });
  }
  {
    auto ro = make_readout(rng, {4, 3});
    add_case("channel", {rand_tensor(rng, {4, 3, 4}, -1, 1)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, channel(in[0], 2));
             });
  }
  {
    auto ro = make_readout(rng, {4, 3, 2});
    add_case("slice_channels", {rand_tensor(rng, {4, 3, 4}, -1, 1)},
             [ro](Tape& t, const std::vector<Value>& in) {
               return ro(t, slice_channels(in[0], 1, 2));
             });
  }
  {
    Tensor target({4, 4});
    for (int64_t i = 0; i < target.numel(); ++i)
      target[i] = static_cast<double>(rng.uniform_int(0, 2));
    add_case("cross_entropy", {rand_tensor(rng, {4, 4, 3}, -2, 2)},
             [target](Tape&, const std::vector<Value>& in) {
               return cross_entropy(channel_softmax(in[0]), target);
             });
  }
  return out;
}

std::vector<SuiteCaseResult> run_op_suite(int trials, double tol, uint64_t seed) {
  std::map<std::string, double> worst;
  std::vector<std::string> order;
  for (int t = 0; t < trials; ++t) {
    auto problems = op_suite(derive_seed(seed, static_cast<uint64_t>(t)));
    for (const auto& p : problems) {
      const auto rep = grad_check(p, 1e-5, 0, derive_seed(seed, 1000 + t));
      auto it = worst.find(p.name);
      if (it == worst.end()) {
        worst[p.name] = rep.max_rel_err;
        order.push_back(p.name);
      } else {
        it->second = std::max(it->second, rep.max_rel_err);
      }
    }
  }
  std::vector<SuiteCaseResult> results;
  for (const auto& name : order)
    results.push_back({name, worst[name], worst[name] <= tol});
  return results;
}

}  // namespace gam::ag
