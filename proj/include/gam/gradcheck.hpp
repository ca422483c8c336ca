// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gam/autograd.hpp"

namespace gam::ag {

// A differentiable scalar-valued program to verify: `forward` must be a
// pure function of the leaf values (same inputs, same output bits).
struct GradCheckProblem {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Value(Tape&, const std::vector<Value>&)> forward;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  int coords_skipped = 0;  // coordinates excluded because ±h straddles a corner
  std::string worst;       // "input[i][flat j]" of the worst coordinate
  bool pass(double tol) const { return coords_checked > 0 && max_rel_err <= tol; }
};

// Central differences with step h against the taped gradients. Relative
// error uses max(|analytic|, |numeric|, 1e-8) as denominator. When
// max_coords_per_input > 0, that many coordinates are sampled per input
// (deterministically from seed) instead of sweeping all of them.
//
// Coordinates where the two one-sided differences disagree are excluded and
// counted in coords_skipped: such disagreement means [x-h, x+h] straddles a
// point of non-differentiability (a relu corner, a clamp bound), where the
// central difference measures an average of the two one-sided slopes rather
// than the derivative, so it cannot confirm or refute the taped gradient.
// The test uses only the numeric evaluations, so a wrong taped gradient can
// never hide a coordinate from checking.
GradCheckReport grad_check(const GradCheckProblem& problem, double h = 1e-5,
                           int max_coords_per_input = 0, uint64_t seed = 1);

// Randomized single-op problems covering the whole op library, with inputs
// kept away from kinks and domain edges.
std::vector<GradCheckProblem> op_suite(uint64_t seed);

struct SuiteCaseResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Runs op_suite `trials` times with derived seeds and aggregates the worst
// relative error per op.
std::vector<SuiteCaseResult> run_op_suite(int trials, double tol, uint64_t seed);

}  // namespace gam::ag
