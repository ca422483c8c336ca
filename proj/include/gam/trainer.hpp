// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "gam/config.hpp"
#include "gam/metrics.hpp"
#include "gam/pipeline.hpp"

namespace gam::train {

pipe::ModelSpec model_spec(const cfg::RunConfig& rc);

struct EvalOptions {
  bool compute_f = true;     // boundary F is the expensive half
  bool dump_masks = false;   // write predicted index masks as PGM
  std::string dump_dir;      // root for the dumps, mirrors the split layout
};

struct EvalResult {
  std::vector<met::ObjectScore> objects;  // sequence order, object id order
  met::EvalSummary summary;
};

// Runs the model over every sequence of a split; per-object J/F are averaged
// over frames 1..n-1 (frame 0 is the given input).
EvalResult evaluate_split(const seg::SegNetParams& params, const pipe::ModelSpec& spec,
                          const std::string& dataset_root, const std::string& split,
                          const EvalOptions& opt = {});

struct TrainResult {
  pipe::Checkpoint checkpoint;
  std::string checkpoint_path;
  std::string log_path;
  std::vector<double> epoch_mean_loss;  // fine + coarse, one entry per epoch
};

// Two-stage optimization (short snippets, then longer ones) with Adam,
// decoupled weight decay on the conv weights, and exponential per-epoch
// learning-rate decay. Deterministic for a fixed config. `verbose` echoes
// one line per epoch to stdout.
TrainResult train(const cfg::RunConfig& rc, bool verbose = false);

struct VariantResult {
  std::string name;
  met::EvalSummary summary;
};

// Trains and evaluates every ablation variant with the base config's seed and
// schedule; writes <out>/ablation.csv plus one subdirectory per variant.
std::vector<VariantResult> run_ablation(const cfg::RunConfig& base,
                                        bool verbose = false);

}  // namespace gam::train
