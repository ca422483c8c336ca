// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gam::cfg {

// Flat key=value run configuration shared by train and ablate. Every field
// maps to exactly one key; unknown keys are rejected with their line number,
// and each run writes the fully resolved set next to its outputs so any
// result can be reproduced from the artifact alone.
struct RunConfig {
  std::string dataset;  // dataset root produced by the synth command
  std::string out;      // output directory

  uint64_t seed = 1;
  int jobs = 0;  // 0 keeps the current worker count

  // model widths
  int width_features = 32;
  int width_skip = 16;
  int width_mask = 32;
  int width_fusion = 32;
  int width_refine1 = 16;
  int width_refine2 = 8;

  // appearance model
  double lambda = 0.1;
  double eps_mass_scale = 1e-6;

  // ablation switches
  bool no_appearance = false;
  bool no_maskprop = false;
  bool unimodal = false;
  bool no_update = false;
  bool appearance_softmax = false;
  bool no_end_to_end = false;

  // schedule: stage 1 on short snippets, stage 2 on longer ones
  int stage1_epochs = 8;
  int stage1_frames = 4;
  int stage2_epochs = 4;
  int stage2_frames = 8;
  int batch = 4;
  double lr = 1e-3;
  double lr_decay = 0.85;
  double weight_decay = 1e-5;
  double stage2_lr = 3e-4;
  double stage2_lr_decay = 0.85;
  double stage2_weight_decay = 1e-6;
  int val_every = 0;  // validate every k epochs; 0 = stage ends only
};

// Every known key, in resolved-file order. The CLI turns each one into a
// --key=value override.
const std::vector<std::string>& config_keys();

// Applies one key=value pair; `origin` names the source (file or flag) for
// error messages and `line` is 0 for command-line overrides.
void apply_key(RunConfig& cfg, const std::string& origin, const std::string& key,
               const std::string& value, int line);

RunConfig parse_run_config(const std::string& path);

// Serializes every key in a fixed order with round-trip precision.
std::string resolved_text(const RunConfig& cfg);
void write_resolved(const RunConfig& cfg, const std::string& path);

// Ablation variants in report row order; "full" clears all switches, every
// other name sets exactly one.
const std::vector<std::string>& ablation_names();
void set_ablation(RunConfig& cfg, const std::string& variant);

}  // namespace gam::cfg
