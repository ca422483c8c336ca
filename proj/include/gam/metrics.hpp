// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "gam/tensor.hpp"

namespace gam::met {

// Intersection over union of two binary (0/1) masks. Two empty masks agree
// perfectly and score 1.
double jaccard(const Tensor& pred, const Tensor& gt);

// Boundary F-measure: boundary pixels are mask pixels with a 4-neighbor
// outside the mask (the frame edge counts as outside). A boundary pixel
// matches when the other mask has a boundary pixel within Euclidean distance
// `radius`. F is the harmonic mean of boundary precision and recall; two
// boundary-free masks score 1.
double contour_f(const Tensor& pred, const Tensor& gt, int radius = 1);

struct ObjectScore {
  std::string seq_id;
  int object_id = 0;
  std::string cls;
  bool seen = true;
  double J = 0.0;
  double F = 0.0;
};

struct EvalSummary {
  double J_seen = 0, J_unseen = 0, F_seen = 0, F_unseen = 0, G = 0;
  int n_seen = 0, n_unseen = 0;
};

EvalSummary summarize(const std::vector<ObjectScore>& scores);

// Per-object rows followed by a summary block. Matches the layout produced
// by the eval subcommand.
void write_results_csv(const std::string& path, const std::vector<ObjectScore>& scores,
                       const EvalSummary& summary);

}  // namespace gam::met
