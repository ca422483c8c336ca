// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <utility>

#include "gam/autograd.hpp"

namespace gam::app {

// Class-conditional appearance mixture over feature pixels. Four diagonal
// Gaussian components with a uniform prior: 0 tracks the background, 1 the
// foreground, 2 and 3 absorb pixels the base components misassign (hard
// background / hard foreground).
inline constexpr int n_components = 4;

struct MixtureParams {
  std::array<ag::Value, n_components> mean;  // each (D)
  std::array<ag::Value, n_components> var;   // each (D), strictly positive
};

struct UpdateConfig {
  double lambda = 0.1;           // blend rate of per-frame stats into the state
  double eps_mass_scale = 1e-6;  // component is degenerate when its total
                                 // assignment mass < scale * h * w
};

double eps_mass(const UpdateConfig& cfg, int h, int w);

// Total assignment mass of a weight map (plain forward value).
double mass(const ag::Value& alpha);

// Base assignments from a soft foreground mask: (1 - y, y). Entries of y
// must lie in [0, 1].
std::pair<ag::Value, ag::Value> base_assignments(const ag::Value& y_soft);

// Assignment-weighted mean and variance of the feature map, the variance
// lifted by the (positive) per-dimension regularizer reg.
std::pair<ag::Value, ag::Value> weighted_moments(const ag::Value& x,
                                                 const ag::Value& alpha,
                                                 const ag::Value& reg);

// Softmax posteriors over the two base components from their score maps.
ag::Value base_posteriors(const ag::Value& s0, const ag::Value& s1);  // (h,w,2)

// Residual assignments: the posterior mass the base assignment failed to
// claim, clipped at zero.
std::pair<ag::Value, ag::Value> residual_assignments(const ag::Value& posteriors,
                                                     const ag::Value& a0,
                                                     const ag::Value& a1);

// Per-component blend new = (1 - lambda) * prev + lambda * tilde; components
// flagged in `carry` keep prev verbatim (used when their mass was degenerate).
MixtureParams ema_update(const MixtureParams& prev, const MixtureParams& tilde,
                         double lambda, const std::array<bool, n_components>& carry);

// State from the first frame's hard mask (entries must be exactly 0 or 1,
// and both classes must be present). Residual components with degenerate
// mass copy their base component.
MixtureParams init_first_frame(const ag::Value& x, const Tensor& y0,
                               const std::array<ag::Value, n_components>& reg,
                               const UpdateConfig& cfg, bool unimodal);

// One recurrent state update from the current frame's features and the
// propagated soft mask. Order per frame: base assignments, base stats,
// scores from those fresh stats, posteriors, residual assignments, residual
// stats, then the blend into the carried state. `sever` cuts gradients at
// every statistic input (x, assignments, reg), leaving only the score path
// differentiable.
MixtureParams update(const ag::Value& x, const ag::Value& y_soft,
                     const MixtureParams& prev,
                     const std::array<ag::Value, n_components>& reg,
                     const UpdateConfig& cfg, bool unimodal, bool sever);

// Per-pixel log scores of all components, (h,w,4); in unimodal mode the
// residual channels are zero.
ag::Value score_map(const ag::Value& x, const MixtureParams& p, bool unimodal);

}  // namespace gam::app
