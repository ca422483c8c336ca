// SPDX-License-Identifier: Apache-2.0
#include "gam/pipeline.hpp"

#include <cmath>
#include <cstdint>
#include <map>

#include "gam/error.hpp"
#include "gam/rng.hpp"
#include "gam/tensor_io.hpp"

namespace gam::pipe {

std::array<ag::Value, app::n_components> regularizer_values(const seg::TapedParams& P) {
  std::array<ag::Value, app::n_components> reg;
  for (int k = 0; k < app::n_components; ++k)
    reg[k] = ag::softplus(P.at("app.r" + std::to_string(k) + "_raw"));
  return reg;
}

ag::Value aggregate(const std::vector<ag::Value>& fg_masks) {
  check(!fg_masks.empty(), "aggregate: no objects");
  constexpr double eps = 1e-5;
  std::vector<ag::Value> channels(fg_masks.size() + 1);
  ag::Value pbg;
  for (size_t m = 0; m < fg_masks.size(); ++m) {
    const ag::Value c = ag::clamp(fg_masks[m], eps, 1.0 - eps);
    channels[m + 1] = ag::ln(ag::div(c, ag::one_minus(c)));
    pbg = m == 0 ? ag::one_minus(c) : ag::mul(pbg, ag::one_minus(c));
  }
  channels[0] = ag::ln(ag::div(pbg, ag::one_minus(pbg)));
  return ag::channel_softmax(ag::concat_channels(channels));
}

namespace {

// (H,W) index mask -> 0/1 mask of one object.
Tensor binarize(const Tensor& ids, int id) {
  Tensor out(ids.shape());
  for (int64_t i = 0; i < ids.numel(); ++i) out[i] = ids[i] == id ? 1.0 : 0.0;
  return out;
}

int mask_object_count(const Tensor& gt) {
  check(gt.ndim() == 2, "index mask must be rank 2, got ", gt.shape_str());
  int maxid = 0;
  for (int64_t i = 0; i < gt.numel(); ++i) {
    const double v = gt[i];
    check(v == std::floor(v) && v >= 0 && v <= 255, "index mask entries must be "
          "integers in [0,255]");
    maxid = std::max(maxid, static_cast<int>(v));
  }
  check(maxid >= 1, "index mask has no objects");
  std::vector<int64_t> count(static_cast<size_t>(maxid) + 1, 0);
  for (int64_t i = 0; i < gt.numel(); ++i) ++count[static_cast<size_t>(gt[i])];
  for (int id = 1; id <= maxid; ++id)
    check(count[static_cast<size_t>(id)] > 0, "index mask skips id ", id,
          " (ids must be contiguous)");
  return maxid;
}

}  // namespace

std::vector<ObjectTrack> init_tracks(ag::Tape& tape, const seg::TapedParams& P,
                                     const ModelSpec& spec, const Tensor& frame0,
                                     const Tensor& gt0) {
  check(frame0.ndim() == 3 && frame0.shape()[2] == 3, "frame must be (H,W,3), got ",
        frame0.shape_str());
  check(gt0.ndim() == 2 && gt0.shape()[0] == frame0.shape()[0] &&
            gt0.shape()[1] == frame0.shape()[1],
        "mask shape ", gt0.shape_str(), " does not match frame ", frame0.shape_str());
  const int M = mask_object_count(gt0);

  const seg::EncodeOut enc = seg::encode(tape.constant(frame0), P);
  const Tensor gt_small = downsample_nearest(gt0, 4);
  const auto reg = regularizer_values(P);

  std::vector<ObjectTrack> tracks(static_cast<size_t>(M));
  for (int id = 1; id <= M; ++id) {
    ObjectTrack& t = tracks[static_cast<size_t>(id - 1)];
    t.id = id;
    const Tensor y0 = binarize(gt_small, id);
    t.state = app::init_first_frame(enc.features, y0, reg, spec.appearance,
                                    spec.flags.unimodal);
    t.x0 = enc.features;
    t.y0 = tape.constant(y0);
    t.prev_mask = t.y0;
  }
  return tracks;
}

StepResult step(const seg::TapedParams& P, const ModelSpec& spec, const Tensor& frame,
                std::vector<ObjectTrack>& tracks) {
  check(!tracks.empty(), "step: no initialized tracks");
  ag::Tape& tape = *tracks[0].prev_mask->tape;
  const seg::EncodeOut enc = seg::encode(tape.constant(frame), P);
  const int h = enc.features->value.shape()[0];
  const int w = enc.features->value.shape()[1];
  const auto reg = regularizer_values(P);

  StepResult out;
  out.coarse_dist.reserve(tracks.size());
  out.fine_dist.reserve(tracks.size());
  for (ObjectTrack& t : tracks) {
    const ag::Value scores =
        spec.flags.no_appearance
            ? tape.constant(Tensor({h, w, app::n_components}))
            : app::score_map(enc.features, t.state, spec.flags.unimodal);
    const ag::Value prop =
        spec.flags.no_maskprop
            ? tape.constant(Tensor({h, w, P.cfg.width_mask}))
            : seg::mask_propagate(enc.features, t.prev_mask, t.x0, t.y0, P);
    const seg::FuseOut fu =
        seg::fuse_and_predict(scores, prop, P, spec.flags.appearance_softmax);
    out.coarse_dist.push_back(ag::channel_softmax(fu.coarse_logits));
    out.fine_dist.push_back(ag::channel_softmax(seg::refine(fu.mask_encoding, enc.skip, P)));
  }

  std::vector<ag::Value> coarse_fg(tracks.size()), fine_fg(tracks.size());
  for (size_t i = 0; i < tracks.size(); ++i) {
    coarse_fg[i] = ag::channel(out.coarse_dist[i], 1);
    fine_fg[i] = ag::channel(out.fine_dist[i], 1);
  }
  out.agg_coarse = aggregate(coarse_fg);
  out.agg_fine = aggregate(fine_fg);

  // Recurrence: the aggregated coarse channel replaces each object's soft
  // mask, both for the next frame's propagation and for the mixture update.
  for (size_t i = 0; i < tracks.size(); ++i) {
    const ag::Value y_agg = ag::channel(out.agg_coarse, static_cast<int>(i) + 1);
    tracks[i].prev_mask = y_agg;
    if (!spec.flags.no_update)
      tracks[i].state =
          app::update(enc.features, y_agg, tracks[i].state, reg, spec.appearance,
                      spec.flags.unimodal, spec.flags.no_end_to_end);
  }
  return out;
}

ag::Value snippet_loss(ag::Tape& tape, const seg::TapedParams& P, const ModelSpec& spec,
                       const std::vector<Tensor>& frames,
                       const std::vector<Tensor>& gt_masks, LossReport* report) {
  check(frames.size() == gt_masks.size(), "snippet_loss: ", frames.size(), " frames vs ",
        gt_masks.size(), " masks");
  check(frames.size() >= 2, "snippet_loss: need at least 2 frames");

  std::vector<ObjectTrack> tracks = init_tracks(tape, P, spec, frames[0], gt_masks[0]);
  ag::Value fine_total, coarse_total;
  if (report) *report = LossReport{};
  for (size_t t = 1; t < frames.size(); ++t) {
    const StepResult res = step(P, spec, frames[t], tracks);
    const Tensor gt_small = downsample_nearest(gt_masks[t], 4);
    double frame_fine = 0, frame_coarse = 0;
    for (size_t i = 0; i < tracks.size(); ++i) {
      const ag::Value lf =
          ag::cross_entropy(res.fine_dist[i], binarize(gt_masks[t], tracks[i].id));
      const ag::Value lc =
          ag::cross_entropy(res.coarse_dist[i], binarize(gt_small, tracks[i].id));
      fine_total = fine_total ? ag::add(fine_total, lf) : lf;
      coarse_total = coarse_total ? ag::add(coarse_total, lc) : lc;
      frame_fine += lf->value.data()[0];
      frame_coarse += lc->value.data()[0];
    }
    if (report) {
      report->per_frame_fine.push_back(frame_fine);
      report->per_frame_coarse.push_back(frame_coarse);
    }
  }
  const ag::Value total = ag::add(fine_total, coarse_total);
  if (report) {
    report->fine = fine_total->value.data()[0];
    report->coarse = coarse_total->value.data()[0];
    report->total = total->value.data()[0];
  }
  return total;
}

namespace {

DetachedTrack detach(const ObjectTrack& t) {
  DetachedTrack d;
  d.id = t.id;
  for (int k = 0; k < app::n_components; ++k) {
    d.mean[static_cast<size_t>(k)] = t.state.mean[static_cast<size_t>(k)]->value;
    d.var[static_cast<size_t>(k)] = t.state.var[static_cast<size_t>(k)]->value;
  }
  d.x0 = t.x0->value;
  d.y0 = t.y0->value;
  d.prev_mask = t.prev_mask->value;
  return d;
}

ObjectTrack attach(ag::Tape& tape, const DetachedTrack& d) {
  ObjectTrack t;
  t.id = d.id;
  for (int k = 0; k < app::n_components; ++k) {
    t.state.mean[static_cast<size_t>(k)] = tape.constant(d.mean[static_cast<size_t>(k)]);
    t.state.var[static_cast<size_t>(k)] = tape.constant(d.var[static_cast<size_t>(k)]);
  }
  t.x0 = tape.constant(d.x0);
  t.y0 = tape.constant(d.y0);
  t.prev_mask = tape.constant(d.prev_mask);
  return t;
}

Tensor argmax_channels(const Tensor& dist) {
  const int H = dist.shape()[0], W = dist.shape()[1], C = dist.shape()[2];
  Tensor out({H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      int best = 0;
      double bv = dist.at(i, j, 0);
      for (int c = 1; c < C; ++c)
        if (dist.at(i, j, c) > bv) {
          bv = dist.at(i, j, c);
          best = c;
        }
      out.at(i, j) = best;
    }
  return out;
}

}  // namespace

RunnerState eval_init(const seg::SegNetParams& params, const ModelSpec& spec,
                      const Tensor& frame0, const Tensor& gt0) {
  ag::Tape tape;
  const seg::TapedParams P = seg::lift(tape, params, false);
  const std::vector<ObjectTrack> tracks = init_tracks(tape, P, spec, frame0, gt0);
  RunnerState st;
  st.tracks.reserve(tracks.size());
  for (const ObjectTrack& t : tracks) st.tracks.push_back(detach(t));
  return st;
}

Tensor eval_step(const seg::SegNetParams& params, const ModelSpec& spec,
                 RunnerState& state, const Tensor& frame) {
  check(!state.tracks.empty(), "eval_step: uninitialized state");
  ag::Tape tape;
  const seg::TapedParams P = seg::lift(tape, params, false);
  std::vector<ObjectTrack> tracks;
  tracks.reserve(state.tracks.size());
  for (const DetachedTrack& d : state.tracks) tracks.push_back(attach(tape, d));
  const StepResult res = step(P, spec, frame, tracks);
  for (size_t i = 0; i < tracks.size(); ++i) state.tracks[i] = detach(tracks[i]);
  return argmax_channels(res.agg_fine->value);
}

std::vector<Tensor> run_sequence(const seg::SegNetParams& params, const ModelSpec& spec,
                                 const std::vector<Tensor>& frames, const Tensor& gt0) {
  check(!frames.empty(), "run_sequence: no frames");
  RunnerState st = eval_init(params, spec, frames[0], gt0);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  out.push_back(gt0);
  for (size_t t = 1; t < frames.size(); ++t)
    out.push_back(eval_step(params, spec, st, frames[t]));
  return out;
}

namespace {

Tensor rand_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

ag::GradCheckProblem appearance_chain_problem(uint64_t seed) {
  Rng rng(derive_seed(seed, 0xACu));
  const int h = 6, w = 6, D = 4;
  Tensor mask({h, w});
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  mask.at(0, 0) = 0.0;  // both classes must be present
  mask.at(h - 1, w - 1) = 1.0;
  const Tensor readout = rand_tensor(rng, {h, w, app::n_components}, -1.0, 1.0);

  ag::GradCheckProblem p;
  p.name = "chain.appearance_scores";
  p.inputs.push_back(rand_tensor(rng, {h, w, D}, -1.0, 1.0));
  for (int k = 0; k < app::n_components; ++k)
    p.inputs.push_back(rand_tensor(rng, {D}, 0.05, 0.4));
  p.forward = [mask, readout](ag::Tape& tape, const std::vector<ag::Value>& leaves) {
    std::array<ag::Value, app::n_components> reg;
    for (int k = 0; k < app::n_components; ++k) reg[static_cast<size_t>(k)] = leaves[static_cast<size_t>(k) + 1];
    const app::MixtureParams state =
        app::init_first_frame(leaves[0], mask, reg, app::UpdateConfig{}, false);
    const ag::Value scores = app::score_map(leaves[0], state, false);
    return ag::sum(ag::mul(scores, tape.constant(readout)));
  };
  return p;
}

ag::GradCheckProblem frame_forward_problem(uint64_t seed) {
  Rng rng(derive_seed(seed, 0xFFu));
  seg::SegNetConfig tiny;
  tiny.width_features = 4;
  tiny.width_skip = 3;
  tiny.width_mask = 4;
  tiny.width_fusion = 4;
  tiny.width_refine1 = 3;
  tiny.width_refine2 = 2;
  tiny.init_seed = derive_seed(seed, 0xF0u);
  ModelSpec spec;
  spec.net = tiny;

  const int H = 8, W = 8;
  std::vector<Tensor> frames = {rand_tensor(rng, {H, W, 3}, 0.0, 1.0),
                                rand_tensor(rng, {H, W, 3}, 0.0, 1.0)};
  Tensor gt0({H, W}), gt1({H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      gt0.at(i, j) = j < W / 2 ? 1.0 : 0.0;
      gt1.at(i, j) = j < W / 2 + 1 ? 1.0 : 0.0;
    }
  std::vector<Tensor> gts = {gt0, gt1};

  const seg::SegNetParams init = seg::SegNetParams::init(tiny);
  ag::GradCheckProblem p;
  p.name = "chain.frame_forward_loss";
  std::vector<std::string> names;
  for (const auto& [name, t] : init.tensors()) {
    names.push_back(name);
    p.inputs.push_back(t);
  }
  // The trainable init zeroes every bias, and a conv output whose entire
  // receptive field was silenced by an upstream relu then equals its bias
  // exactly — pinning that pre-activation on the relu corner, where finite
  // differences of the bias measure the corner instead of the derivative.
  // Small random biases keep the generated instances away from that
  // configuration; the differentiation paths exercised are the same.
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i].ends_with(".b"))
      for (int64_t j = 0; j < p.inputs[i].numel(); ++j)
        p.inputs[i][j] = rng.uniform(-0.1, 0.1);
  p.forward = [tiny, spec, frames, gts,
               names](ag::Tape&, const std::vector<ag::Value>& leaves) {
    seg::TapedParams P;
    P.cfg = tiny;
    for (const auto& s : seg::conv_specs(tiny)) P.specs[s.name] = s;
    for (size_t i = 0; i < names.size(); ++i) P.values[names[i]] = leaves[i];
    ag::Tape& tape = *leaves[0]->tape;
    return snippet_loss(tape, P, spec, frames, gts, nullptr);
  };
  return p;
}

namespace {

constexpr double kFormatVersion = 1.0;

void split_u64(uint64_t v, double& lo, double& hi) {
  lo = static_cast<double>(v & 0xffffffffull);
  hi = static_cast<double>(v >> 32);
}

uint64_t join_u64(double lo, double hi) {
  return static_cast<uint64_t>(lo) | (static_cast<uint64_t>(hi) << 32);
}

int meta_int(const Tensor& t, size_t i, const char* what) {
  const double v = t.data()[i];
  check(v == std::floor(v) && v >= 0, "checkpoint meta ", what, " is not a "
        "non-negative integer");
  return static_cast<int>(v);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const seg::SegNetConfig& net = ckpt.spec.net;
  NamedTensors out;
  out.emplace_back("meta.format", Tensor::scalar(kFormatVersion));
  double lo = 0, hi = 0;
  split_u64(net.init_seed, lo, hi);
  out.emplace_back(
      "meta.arch",
      Tensor::from_data({8}, {static_cast<double>(net.width_features),
                              static_cast<double>(net.width_skip),
                              static_cast<double>(net.width_mask),
                              static_cast<double>(net.width_fusion),
                              static_cast<double>(net.width_refine1),
                              static_cast<double>(net.width_refine2), lo, hi}));
  out.emplace_back("meta.appearance",
                   Tensor::from_data({2}, {ckpt.spec.appearance.lambda,
                                           ckpt.spec.appearance.eps_mass_scale}));
  const AblationFlags& f = ckpt.spec.flags;
  out.emplace_back(
      "meta.flags",
      Tensor::from_data({6}, {f.no_appearance ? 1.0 : 0.0, f.no_maskprop ? 1.0 : 0.0,
                              f.unimodal ? 1.0 : 0.0, f.no_update ? 1.0 : 0.0,
                              f.appearance_softmax ? 1.0 : 0.0,
                              f.no_end_to_end ? 1.0 : 0.0}));
  for (const auto& [name, t] : ckpt.params.tensors()) out.emplace_back(name, t);
  if (ckpt.adam_t > 0) {
    out.emplace_back("adam.t", Tensor::scalar(static_cast<double>(ckpt.adam_t)));
    for (const auto& [name, t] : ckpt.params.tensors()) {
      const auto m = ckpt.adam_m.find(name), v = ckpt.adam_v.find(name);
      check(m != ckpt.adam_m.end() && v != ckpt.adam_v.end(),
            "checkpoint: optimizer state missing for ", name);
      out.emplace_back("adam.m." + name, m->second);
      out.emplace_back("adam.v." + name, v->second);
    }
  }
  write_bundle(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const NamedTensors all = read_bundle(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : all) by_name[name] = &t;

  const auto get = [&](const std::string& name, int want) -> const Tensor& {
    const auto it = by_name.find(name);
    check(it != by_name.end(), "checkpoint ", path, ": missing ", name);
    check(it->second->ndim() == 1 && it->second->shape()[0] == want, "checkpoint ",
          path, ": ", name, " must have shape (", want, ")");
    return *it->second;
  };

  check(get("meta.format", 1).data()[0] == kFormatVersion, "checkpoint ", path,
        ": unsupported format version");
  const Tensor& arch = get("meta.arch", 8);
  Checkpoint ckpt;
  seg::SegNetConfig net;
  net.width_features = meta_int(arch, 0, "width_features");
  net.width_skip = meta_int(arch, 1, "width_skip");
  net.width_mask = meta_int(arch, 2, "width_mask");
  net.width_fusion = meta_int(arch, 3, "width_fusion");
  net.width_refine1 = meta_int(arch, 4, "width_refine1");
  net.width_refine2 = meta_int(arch, 5, "width_refine2");
  net.init_seed = join_u64(arch.data()[6], arch.data()[7]);
  ckpt.spec.net = net;

  const Tensor& ap = get("meta.appearance", 2);
  ckpt.spec.appearance.lambda = ap.data()[0];
  ckpt.spec.appearance.eps_mass_scale = ap.data()[1];
  check(ckpt.spec.appearance.lambda >= 0 && ckpt.spec.appearance.lambda <= 1,
        "checkpoint ", path, ": lambda outside [0,1]");

  const Tensor& fl = get("meta.flags", 6);
  for (int64_t i = 0; i < fl.numel(); ++i)
    check(fl[i] == 0.0 || fl[i] == 1.0, "checkpoint ", path, ": flags must be 0/1");
  ckpt.spec.flags.no_appearance = fl.data()[0] != 0;
  ckpt.spec.flags.no_maskprop = fl.data()[1] != 0;
  ckpt.spec.flags.unimodal = fl.data()[2] != 0;
  ckpt.spec.flags.no_update = fl.data()[3] != 0;
  ckpt.spec.flags.appearance_softmax = fl.data()[4] != 0;
  ckpt.spec.flags.no_end_to_end = fl.data()[5] != 0;

  NamedTensors params;
  for (const auto& [name, t] : all)
    if (name.rfind("meta.", 0) != 0 && name.rfind("adam.", 0) != 0)
      params.emplace_back(name, t);
  ckpt.params = seg::SegNetParams::from_tensors(net, params);

  if (by_name.count("adam.t")) {
    const Tensor& ts = get("adam.t", 1);
    ckpt.adam_t = static_cast<int64_t>(meta_int(ts, 0, "adam.t"));
    check(ckpt.adam_t > 0, "checkpoint ", path, ": adam.t must be positive");
    for (const auto& [name, t] : params) {
      const auto m = by_name.find("adam.m." + name), v = by_name.find("adam.v." + name);
      check(m != by_name.end() && v != by_name.end(), "checkpoint ", path,
            ": optimizer state missing for ", name);
      check(m->second->shape() == t.shape() && v->second->shape() == t.shape(),
            "checkpoint ", path, ": optimizer state shape mismatch for ", name);
      ckpt.adam_m.emplace(name, *m->second);
      ckpt.adam_v.emplace(name, *v->second);
    }
  }
  return ckpt;
}

}  // namespace gam::pipe
