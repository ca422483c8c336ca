// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gam/appearance.hpp"
#include "gam/gradcheck.hpp"
#include "gam/segnet.hpp"

namespace gam::pipe {

// Model surgery switches. Each one removes or replaces a single mechanism so
// its contribution can be measured; all default to the full model.
struct AblationFlags {
  bool no_appearance = false;      // zero score maps into the fusion stage
  bool no_maskprop = false;        // zero propagation encoding into fusion
  bool unimodal = false;           // base mixture components only
  bool no_update = false;          // freeze the mixture after frame 0
  bool appearance_softmax = false; // fuse posteriors instead of log scores
  bool no_end_to_end = false;      // cut gradients through the update stats
  bool operator==(const AblationFlags&) const = default;
};

// Everything needed to run the model: network widths, mixture update
// schedule, and which mechanisms are active.
struct ModelSpec {
  seg::SegNetConfig net;
  app::UpdateConfig appearance;
  AblationFlags flags;
};

// Per-target recurrent state. All values live on the tape that built them.
struct ObjectTrack {
  int id = 1;                // mask label, 1-based
  app::MixtureParams state;  // appearance mixture
  ag::Value x0;              // frame-0 features (h,w,D)
  ag::Value y0;              // frame-0 binary mask at feature scale (h,w)
  ag::Value prev_mask;       // recurrent coarse mask (h,w), starts at y0
};

struct StepResult {
  std::vector<ag::Value> coarse_dist;  // per object (h,w,2) softmax
  std::vector<ag::Value> fine_dist;    // per object (H,W,2) softmax
  ag::Value agg_coarse;                // (h,w,M+1), channel 0 = background
  ag::Value agg_fine;                  // (H,W,M+1)
};

// Positive per-dimension variance regularizers from their raw parameters.
std::array<ag::Value, app::n_components> regularizer_values(const seg::TapedParams& P);

// Merges per-object soft foreground masks into one distribution over
// {background, object 1..M}: each mask becomes a logit ln(p/(1-p)) after
// clamping to [1e-5, 1-1e-5], the background logit comes from
// p_bg = prod_m (1-p_m), and a softmax normalizes the M+1 channels.
ag::Value aggregate(const std::vector<ag::Value>& fg_masks);

// Builds one track per object id in gt0 (ids must be 0..M with M >= 1,
// every object present). Features are computed once and shared.
std::vector<ObjectTrack> init_tracks(ag::Tape& tape, const seg::TapedParams& P,
                                     const ModelSpec& spec, const Tensor& frame0,
                                     const Tensor& gt0);

// One recurrent step: encode the frame once, run every track through
// appearance scoring, mask propagation, fusion and refinement, aggregate the
// coarse and fine masks, then feed the aggregated coarse channel back as each
// track's recurrent mask and (unless frozen) into its mixture update.
StepResult step(const seg::TapedParams& P, const ModelSpec& spec, const Tensor& frame,
                std::vector<ObjectTrack>& tracks);

// Pixel-mean cross-entropies summed over objects and supervised frames
// (frame 0 carries the given ground truth and is excluded).
struct LossReport {
  double fine = 0, coarse = 0, total = 0;
  std::vector<double> per_frame_fine, per_frame_coarse;  // index 0 = frame 1
};

// Runs the model over a snippet on the caller's tape and returns the total
// loss value (fine + coarse, unit weights). Fills `report` when non-null.
ag::Value snippet_loss(ag::Tape& tape, const seg::TapedParams& P, const ModelSpec& spec,
                       const std::vector<Tensor>& frames,
                       const std::vector<Tensor>& gt_masks, LossReport* report);

// Inference over long sequences runs one tape per frame; the state carried
// between frames is detached to plain tensors.
struct DetachedTrack {
  int id = 1;
  std::array<Tensor, app::n_components> mean, var;
  Tensor x0, y0, prev_mask;
};

struct RunnerState {
  std::vector<DetachedTrack> tracks;
};

RunnerState eval_init(const seg::SegNetParams& params, const ModelSpec& spec,
                      const Tensor& frame0, const Tensor& gt0);

// Advances one frame and returns the predicted index mask (H,W), argmax of
// the aggregated fine distribution.
Tensor eval_step(const seg::SegNetParams& params, const ModelSpec& spec,
                 RunnerState& state, const Tensor& frame);

// Full-sequence inference. Element 0 is the given first-frame mask; elements
// 1..n-1 are predictions.
std::vector<Tensor> run_sequence(const seg::SegNetParams& params, const ModelSpec& spec,
                                 const std::vector<Tensor>& frames, const Tensor& gt0);

// Randomized composite problems for the gradient checker. The appearance
// chain fits the mixture on a hard mask and reads out its score maps; the
// frame forward runs a tiny end-to-end model through the snippet loss with
// every parameter as a checked leaf.
ag::GradCheckProblem appearance_chain_problem(uint64_t seed);
ag::GradCheckProblem frame_forward_problem(uint64_t seed);

// Checkpoint = model spec + parameters + optional optimizer state, all in one
// tensor bundle, so evaluation needs no side channel.
struct Checkpoint {
  ModelSpec spec;
  seg::SegNetParams params;
  int64_t adam_t = 0;  // 0 = no optimizer state
  std::map<std::string, Tensor> adam_m, adam_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gam::pipe
