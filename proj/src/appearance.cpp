// SPDX-License-Identifier: Apache-2.0
#include "gam/appearance.hpp"

#include <cmath>

namespace gam::app {

using ag::Value;

double eps_mass(const UpdateConfig& cfg, int h, int w) {
  return cfg.eps_mass_scale * static_cast<double>(h) * static_cast<double>(w);
}

double mass(const Value& alpha) { return gam::sum(alpha->value); }

namespace {

void require_features(const char* op, const Value& x) {
  check(x->value.ndim() == 3, op, ": features must be (h,w,D), got ",
        x->value.shape_str());
}

void require_soft_mask(const char* op, const Value& y, const Value& x) {
  check(y->value.ndim() == 2, op, ": mask must be (h,w), got ", y->value.shape_str());
  check(y->value.dim(0) == x->value.dim(0) && y->value.dim(1) == x->value.dim(1), op,
        ": mask grid ", y->value.shape_str(), " does not match features ",
        x->value.shape_str());
  const double* p = y->value.data();
  for (int64_t i = 0; i < y->value.numel(); ++i)
    check(p[i] >= 0.0 && p[i] <= 1.0, op, ": mask value ", p[i], " at flat index ", i,
          " outside [0,1]");
}

}  // namespace

std::pair<Value, Value> base_assignments(const Value& y_soft) {
  check(y_soft->value.ndim() == 2, "base_assignments: mask must be (h,w), got ",
        y_soft->value.shape_str());
  const double* p = y_soft->value.data();
  for (int64_t i = 0; i < y_soft->value.numel(); ++i)
    check(p[i] >= 0.0 && p[i] <= 1.0, "base_assignments: mask value ", p[i],
          " at flat index ", i, " outside [0,1]");
  return {ag::one_minus(y_soft), y_soft};
}

std::pair<Value, Value> weighted_moments(const Value& x, const Value& alpha,
                                         const Value& reg) {
  require_features("weighted_moments", x);
  Value mu = ag::weighted_mean(x, alpha);
  Value var = ag::weighted_var(x, alpha, mu, reg);
  return {mu, var};
}

Value base_posteriors(const Value& s0, const Value& s1) {
  check(s0->value.ndim() == 2 && s1->value.ndim() == 2,
        "base_posteriors: score maps must be (h,w)");
  return ag::channel_softmax(ag::concat_channels({s0, s1}));
}

std::pair<Value, Value> residual_assignments(const Value& posteriors, const Value& a0,
                                             const Value& a1) {
  check(posteriors->value.ndim() == 3 && posteriors->value.dim(2) == 2,
        "residual_assignments: posteriors must be (h,w,2), got ",
        posteriors->value.shape_str());
  Value r0 = ag::relu(ag::sub(ag::channel(posteriors, 0), a0));
  Value r1 = ag::relu(ag::sub(ag::channel(posteriors, 1), a1));
  return {r0, r1};
}

MixtureParams ema_update(const MixtureParams& prev, const MixtureParams& tilde,
                         double lambda, const std::array<bool, n_components>& carry) {
  MixtureParams out;
  for (int k = 0; k < n_components; ++k) {
    if (carry[static_cast<size_t>(k)]) {
      out.mean[static_cast<size_t>(k)] = prev.mean[static_cast<size_t>(k)];
      out.var[static_cast<size_t>(k)] = prev.var[static_cast<size_t>(k)];
    } else {
      out.mean[static_cast<size_t>(k)] = ag::ema_blend(
          prev.mean[static_cast<size_t>(k)], tilde.mean[static_cast<size_t>(k)], lambda);
      out.var[static_cast<size_t>(k)] = ag::ema_blend(
          prev.var[static_cast<size_t>(k)], tilde.var[static_cast<size_t>(k)], lambda);
    }
  }
  return out;
}

MixtureParams init_first_frame(const Value& x, const Tensor& y0,
                               const std::array<ag::Value, n_components>& reg,
                               const UpdateConfig& cfg, bool unimodal) {
  require_features("init_first_frame", x);
  check(y0.ndim() == 2, "init_first_frame: mask must be (h,w), got ", y0.shape_str());
  check(y0.dim(0) == x->value.dim(0) && y0.dim(1) == x->value.dim(1),
        "init_first_frame: mask grid ", y0.shape_str(), " does not match features ",
        x->value.shape_str());
  int64_t fg = 0, bg = 0;
  for (int64_t i = 0; i < y0.numel(); ++i) {
    check(y0[i] == 0.0 || y0[i] == 1.0, "init_first_frame: mask value ", y0[i],
          " at flat index ", i, " is not binary");
    (y0[i] == 1.0 ? fg : bg)++;
  }
  check(fg > 0, "init_first_frame: mask has empty foreground");
  check(bg > 0, "init_first_frame: mask has empty background");

  ag::Tape& tape = *x->tape;
  Value y = tape.constant(y0);
  auto [a0, a1] = base_assignments(y);

  MixtureParams p;
  std::tie(p.mean[0], p.var[0]) = weighted_moments(x, a0, reg[0]);
  std::tie(p.mean[1], p.var[1]) = weighted_moments(x, a1, reg[1]);
  if (unimodal) {
    p.mean[2] = p.mean[0];
    p.var[2] = p.var[0];
    p.mean[3] = p.mean[1];
    p.var[3] = p.var[1];
    return p;
  }
  Value s0 = ag::gauss_score(x, p.mean[0], p.var[0]);
  Value s1 = ag::gauss_score(x, p.mean[1], p.var[1]);
  Value post = base_posteriors(s0, s1);
  auto [a2, a3] = residual_assignments(post, a0, a1);
  const double eps = eps_mass(cfg, x->value.dim(0), x->value.dim(1));
  const Value alphas[2] = {a2, a3};
  for (int k = 2; k < n_components; ++k) {
    const Value& a = alphas[k - 2];
    if (mass(a) < eps) {
      // Degenerate residual: borrow the base component of the same class.
      p.mean[static_cast<size_t>(k)] = p.mean[static_cast<size_t>(k - 2)];
      p.var[static_cast<size_t>(k)] = p.var[static_cast<size_t>(k - 2)];
    } else {
      std::tie(p.mean[static_cast<size_t>(k)], p.var[static_cast<size_t>(k)]) =
          weighted_moments(x, a, reg[static_cast<size_t>(k)]);
    }
  }
  return p;
}

MixtureParams update(const Value& x, const Value& y_soft, const MixtureParams& prev,
                     const std::array<ag::Value, n_components>& reg,
                     const UpdateConfig& cfg, bool unimodal, bool sever) {
  require_features("update", x);
  require_soft_mask("update", y_soft, x);
  const Value xs = sever ? ag::stop_gradient(x) : x;
  const Value ys = sever ? ag::stop_gradient(y_soft) : y_soft;
  std::array<Value, n_components> rs;
  for (int k = 0; k < n_components; ++k)
    rs[static_cast<size_t>(k)] = sever ? ag::stop_gradient(reg[static_cast<size_t>(k)])
                                       : reg[static_cast<size_t>(k)];

  const double eps = eps_mass(cfg, x->value.dim(0), x->value.dim(1));
  auto [a0, a1] = base_assignments(ys);

  MixtureParams tilde;
  std::array<bool, n_components> carry{false, false, true, true};
  const Value base_alphas[2] = {a0, a1};
  for (int k = 0; k < 2; ++k) {
    const Value& a = base_alphas[k];
    if (mass(a) < eps) {
      carry[static_cast<size_t>(k)] = true;
      tilde.mean[static_cast<size_t>(k)] = prev.mean[static_cast<size_t>(k)];
      tilde.var[static_cast<size_t>(k)] = prev.var[static_cast<size_t>(k)];
    } else {
      std::tie(tilde.mean[static_cast<size_t>(k)], tilde.var[static_cast<size_t>(k)]) =
          weighted_moments(xs, a, rs[static_cast<size_t>(k)]);
    }
  }
  if (!unimodal) {
    // Scores for the residual split come from this frame's fresh base stats,
    // not the carried state.
    Value s0 = ag::gauss_score(xs, tilde.mean[0], tilde.var[0]);
    Value s1 = ag::gauss_score(xs, tilde.mean[1], tilde.var[1]);
    Value post = base_posteriors(s0, s1);
    auto [a2, a3] = residual_assignments(post, a0, a1);
    const Value res_alphas[2] = {a2, a3};
    for (int k = 2; k < n_components; ++k) {
      const Value& a = res_alphas[k - 2];
      if (mass(a) >= eps) {
        carry[static_cast<size_t>(k)] = false;
        std::tie(tilde.mean[static_cast<size_t>(k)], tilde.var[static_cast<size_t>(k)]) =
            weighted_moments(xs, a, rs[static_cast<size_t>(k)]);
      }
    }
  }
  for (int k = 0; k < n_components; ++k) {
    if (carry[static_cast<size_t>(k)] && !tilde.mean[static_cast<size_t>(k)]) {
      tilde.mean[static_cast<size_t>(k)] = prev.mean[static_cast<size_t>(k)];
      tilde.var[static_cast<size_t>(k)] = prev.var[static_cast<size_t>(k)];
    }
  }
  return ema_update(prev, tilde, cfg.lambda, carry);
}

Value score_map(const Value& x, const MixtureParams& p, bool unimodal) {
  require_features("score_map", x);
  ag::Tape& tape = *x->tape;
  std::vector<Value> maps;
  for (int k = 0; k < n_components; ++k) {
    if (unimodal && k >= 2) {
      maps.push_back(tape.constant(Tensor({x->value.dim(0), x->value.dim(1)})));
    } else {
      maps.push_back(ag::gauss_score(x, p.mean[static_cast<size_t>(k)],
                                     p.var[static_cast<size_t>(k)]));
    }
  }
  return ag::concat_channels(maps);
}

}  // namespace gam::app
