// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "gam/autograd.hpp"
#include "gam/tensor_io.hpp"

namespace gam::seg {

// Network widths. Features come out of the encoder at quarter resolution
// with width_features channels; the skip path carries width_skip channels at
// half resolution.
struct SegNetConfig {
  int width_features = 32;
  int width_skip = 16;
  int width_mask = 32;
  int width_fusion = 32;
  int width_refine1 = 16;
  int width_refine2 = 8;
  uint64_t init_seed = 1;

  bool operator==(const SegNetConfig&) const = default;
};

struct ConvSpec {
  std::string name;
  int k, cin, cout, stride, dilation;
};

// Layer table in census order; single source of truth for shapes, strides
// and dilations.
std::vector<ConvSpec> conv_specs(const SegNetConfig& cfg);

// All trainable tensors in a fixed order: for each conv layer its weights
// (k,k,cin,cout) and bias (cout), then the four appearance regularizer rows
// app.r0_raw .. app.r3_raw (width_features each, softplus-parameterized).
class SegNetParams {
 public:
  static SegNetParams init(const SegNetConfig& cfg);

  const SegNetConfig& config() const { return cfg_; }
  const NamedTensors& tensors() const { return tensors_; }
  NamedTensors& tensors() { return tensors_; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  // "name shape;name shape;..." over the census order.
  std::string census() const;

  static SegNetParams from_tensors(const SegNetConfig& cfg, const NamedTensors& ts);

 private:
  SegNetConfig cfg_;
  NamedTensors tensors_;
};

// Parameters lifted onto a tape, as leaves (training) or constants (eval).
struct TapedParams {
  SegNetConfig cfg;
  std::map<std::string, ag::Value> values;
  std::map<std::string, ConvSpec> specs;

  const ag::Value& at(const std::string& name) const;
};
TapedParams lift(ag::Tape& tape, const SegNetParams& params, bool requires_grad);

struct EncodeOut {
  ag::Value features;  // (H/4, W/4, width_features)
  ag::Value skip;      // (H/2, W/2, width_skip)
};

// Image (H,W,3) -> features + skip. H and W must be divisible by 4.
EncodeOut encode(const ag::Value& image, const TapedParams& P);

// Mask propagation: current features, previous soft mask, and the first
// frame's features and mask, concatenated and pushed through a conv stack
// whose middle stage sums three dilated branches (rates 1, 2, 4).
ag::Value mask_propagate(const ag::Value& x, const ag::Value& y_prev,
                         const ag::Value& x0, const ag::Value& y0,
                         const TapedParams& P);

struct FuseOut {
  ag::Value mask_encoding;  // (h, w, width_fusion), input to refinement
  ag::Value coarse_logits;  // (h, w, 2)
};

// Fuses appearance score maps with the propagation encoding. When
// softmax_scores is set the scores are converted to posteriors first.
FuseOut fuse_and_predict(const ag::Value& scores, const ag::Value& mask_encoding,
                         const TapedParams& P, bool softmax_scores);

// Two upsampling stages back to input resolution, mixing in the skip at the
// intermediate scale; output is full-resolution 2-channel logits.
ag::Value refine(const ag::Value& mask_encoding, const ag::Value& skip,
                 const TapedParams& P);

}  // namespace gam::seg
