// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gam/tensor.hpp"

namespace gam::vos {

// Shape vocabulary. The first four classes appear in both splits; cross and
// star are held out of training so the validation split can probe
// generalization to unseen appearance.
enum class ShapeClass { ellipse, rectangle, triangle, annulus, cross, star };

std::string class_name(ShapeClass c);
ShapeClass class_from_name(const std::string& name);
const std::vector<ShapeClass>& seen_classes();
const std::vector<ShapeClass>& unseen_classes();

struct ObjectSpec {
  ShapeClass cls = ShapeClass::ellipse;
  double cx = 0, cy = 0;  // center at t = 0, pixel units
  double vx = 0, vy = 0;  // linear velocity per frame
  double rot = 0, rot_rate = 0;
  double size = 8;        // primary radius
  double aspect = 1;      // secondary axis scale (ellipse, rectangle)
  int z = 0;              // higher z draws on top
  int texture = 0;        // 0 flat, 1 gradient, 2 value noise
  double c0[3] = {0, 0, 0};
  double c1[3] = {0, 0, 0};
  // Per-frame drift of the texture color endpoints: the color at frame t is
  // clamp(c + dc * t). Gradual appearance change keeps a frame-0 template
  // from being a sufficient long-term object descriptor.
  double dc0[3] = {0, 0, 0};
  double dc1[3] = {0, 0, 0};
  uint64_t noise_seed = 0;
};

struct SequenceSpec {
  int H = 64, W = 64, n = 8;
  uint64_t seed = 0;  // recorded in the manifest
  std::vector<ObjectSpec> objects;  // object id = index + 1
  int bg_texture = 0;
  double bg_c0[3] = {0, 0, 0};
  double bg_c1[3] = {0, 0, 0};
  uint64_t bg_noise_seed = 0;
};

struct Sequence {
  SequenceSpec spec;
  std::vector<Tensor> frames;  // (H,W,3), values in [0,1]
  std::vector<Tensor> masks;   // (H,W), integer object ids, 0 = background
};

struct GenParams {
  int H = 64, W = 64, n = 8;
  int min_objects = 1, max_objects = 3;
  std::vector<ShapeClass> classes = seen_classes();
  double min_size = 6.0, max_size = 11.0;
  double occlusion_prob = 0.35;   // chance a multi-object sequence gets a
                                  // mid-sequence path crossing
  double distractor_prob = 0.6;   // chance object 2 repeats object 1's class
};

// Hard-edged rasterization at pixel centers, no anti-aliasing; textures ride
// along with the object (sampled in its local frame).
Sequence render(const SequenceSpec& spec);

// Samples a spec and renders it. Re-samples (bounded, deterministic) until
// every object is visible in frame 0 both at full resolution and on the
// stride-4 feature grid.
Sequence generate(const GenParams& params, uint64_t seed);

struct DatasetParams {
  int height = 64, width = 64;
  int train_sequences = 300, val_sequences = 40;
  int train_frames = 8, val_frames = 16;
  int min_objects = 1, max_objects = 3;
  double min_size = 6.0, max_size = 11.0;
  double occlusion_prob = 0.35;
  double distractor_prob = 0.6;
  uint64_t seed = 7;
};

// key=value spec file; unknown keys and malformed lines fail with the line
// number in the message.
DatasetParams parse_dataset_params(const std::string& path);

// Writes <root>/dataset.txt plus train/ and val/ sequence directories, each
// holding frame_%04d.gten (f32), mask_%04d.pgm and manifest.txt. Training
// sequences use seen classes only; validation mixes in the held-out ones and
// is guaranteed to contain each of them at least once.
void build_dataset(const DatasetParams& p, const std::string& root);

struct DatasetMeta {
  int height = 0, width = 0;
  int train_sequences = 0, val_sequences = 0;
  int train_frames = 0, val_frames = 0;
  std::vector<std::string> seen, unseen;
  uint64_t seed = 0;
};
DatasetMeta read_dataset_meta(const std::string& root);

struct LoadedSequence {
  std::string id;
  std::vector<Tensor> frames;  // (H,W,3) doubles in [0,1]
  std::vector<Tensor> masks;   // (H,W) ids
  int M = 0;
  std::vector<std::string> classes;  // per object, index = id - 1
  uint64_t seed = 0;
};

std::vector<std::string> list_sequences(const std::string& split_dir);  // sorted ids
LoadedSequence load_sequence(const std::string& seq_dir);

}  // namespace gam::vos
