// SPDX-License-Identifier: Apache-2.0
#include "gam/segnet.hpp"

#include <cmath>

#include "gam/rng.hpp"

namespace gam::seg {

std::vector<ConvSpec> conv_specs(const SegNetConfig& cfg) {
  check(cfg.width_features >= 1 && cfg.width_skip >= 1 && cfg.width_mask >= 1 &&
            cfg.width_fusion >= 1 && cfg.width_refine1 >= 1 && cfg.width_refine2 >= 1,
        "network widths must be positive");
  const int D = cfg.width_features, Ds = cfg.width_skip;
  const int Cm = cfg.width_mask, Cf = cfg.width_fusion;
  const int R1 = cfg.width_refine1, R2 = cfg.width_refine2;
  return {
      {"enc.l1", 3, 3, Ds, 2, 1},
      {"enc.l2", 3, Ds, Ds, 1, 1},
      {"enc.l3", 3, Ds, D, 2, 1},
      {"enc.l4", 3, D, D, 1, 1},
      {"mp.l1", 3, 2 * D + 2, Cm, 1, 1},
      {"mp.pyr1", 3, Cm, Cm, 1, 1},
      {"mp.pyr2", 3, Cm, Cm, 1, 2},
      {"mp.pyr3", 3, Cm, Cm, 1, 4},
      {"mp.l3", 3, Cm, Cm, 1, 1},
      {"fu.l1", 3, 4 + Cm, Cf, 1, 1},
      {"fu.l2", 3, Cf, Cf, 1, 1},
      {"fu.head", 1, Cf, 2, 1, 1},
      {"re.l1", 3, Cf + Ds, R1, 1, 1},
      {"re.l2", 3, R1, R2, 1, 1},
      {"re.head", 1, R2, 2, 1, 1},
  };
}

SegNetParams SegNetParams::init(const SegNetConfig& cfg) {
  SegNetParams p;
  p.cfg_ = cfg;
  Rng rng(cfg.init_seed);
  for (const auto& s : conv_specs(cfg)) {
    Tensor w({s.k, s.k, s.cin, s.cout});
    // Uniform He bound: keeps activation variance roughly constant through
    // the relu stack, so the appearance model sees non-degenerate features
    // from the first optimizer step.
    const double bound = std::sqrt(6.0 / (static_cast<double>(s.k) * s.k * s.cin));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
    p.tensors_.emplace_back(s.name + ".w", std::move(w));
    p.tensors_.emplace_back(s.name + ".b", Tensor({s.cout}));
  }
  const double r_raw0 = std::log(std::expm1(0.1));  // softplus(r_raw0) == 0.1
  for (int k = 0; k < 4; ++k)
    p.tensors_.emplace_back("app.r" + std::to_string(k) + "_raw",
                            Tensor::full({cfg.width_features}, r_raw0));
  return p;
}

Tensor& SegNetParams::at(const std::string& name) {
  for (auto& [n, t] : tensors_)
    if (n == name) return t;
  fail("unknown parameter '", name, "'");
}

const Tensor& SegNetParams::at(const std::string& name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return t;
  fail("unknown parameter '", name, "'");
}

std::string SegNetParams::census() const {
  std::string out;
  for (const auto& [n, t] : tensors_) {
    if (!out.empty()) out += ";";
    out += n + " " + t.shape_str();
  }
  return out;
}

SegNetParams SegNetParams::from_tensors(const SegNetConfig& cfg, const NamedTensors& ts) {
  SegNetParams expect = init(cfg);
  check(ts.size() == expect.tensors_.size(), "parameter census size mismatch: expected ",
        expect.tensors_.size(), " tensors, got ", ts.size());
  for (size_t i = 0; i < ts.size(); ++i) {
    const auto& [name, t] = ts[i];
    auto& [ename, et] = expect.tensors_[i];
    check(name == ename, "parameter census mismatch at position ", i, ": expected '",
          ename, "', got '", name, "'");
    check(t.same_shape(et), "parameter '", name, "' has shape ", t.shape_str(),
          ", expected ", et.shape_str());
    et = t;
  }
  return expect;
}

TapedParams lift(ag::Tape& tape, const SegNetParams& params, bool requires_grad) {
  TapedParams tp;
  tp.cfg = params.config();
  for (const auto& s : conv_specs(tp.cfg)) tp.specs[s.name] = s;
  for (const auto& [name, t] : params.tensors())
    tp.values[name] = tape.leaf(t, requires_grad);
  return tp;
}

const ag::Value& TapedParams::at(const std::string& name) const {
  auto it = values.find(name);
  check(it != values.end(), "unknown parameter '", name, "'");
  return it->second;
}

namespace {
ag::Value layer(const TapedParams& P, const std::string& name, const ag::Value& x) {
  auto it = P.specs.find(name);
  check(it != P.specs.end(), "unknown conv layer '", name, "'");
  const ConvSpec& s = it->second;
  return ag::conv2d(x, P.at(name + ".w"), P.at(name + ".b"), s.stride, s.dilation);
}
}  // namespace

EncodeOut encode(const ag::Value& image, const TapedParams& P) {
  check(image->value.ndim() == 3 && image->value.dim(2) == 3,
        "encode: image must be (H,W,3), got ", image->value.shape_str());
  check(image->value.dim(0) % 4 == 0 && image->value.dim(1) % 4 == 0,
        "encode: image size ", image->value.dim(0), "x", image->value.dim(1),
        " must be divisible by 4");
  ag::Value h1 = ag::relu(layer(P, "enc.l1", image));
  ag::Value skip = ag::relu(layer(P, "enc.l2", h1));
  ag::Value h3 = ag::relu(layer(P, "enc.l3", skip));
  ag::Value features = layer(P, "enc.l4", h3);
  return {features, skip};
}

ag::Value mask_propagate(const ag::Value& x, const ag::Value& y_prev,
                         const ag::Value& x0, const ag::Value& y0,
                         const TapedParams& P) {
  ag::Value in = ag::concat_channels({x, y_prev, x0, y0});
  ag::Value h = ag::relu(layer(P, "mp.l1", in));
  ag::Value pyr = ag::relu(ag::add(ag::add(layer(P, "mp.pyr1", h), layer(P, "mp.pyr2", h)),
                                   layer(P, "mp.pyr3", h)));
  return layer(P, "mp.l3", pyr);
}

FuseOut fuse_and_predict(const ag::Value& scores, const ag::Value& mask_encoding,
                         const TapedParams& P, bool softmax_scores) {
  check(scores->value.ndim() == 3 && scores->value.dim(2) == 4,
        "fuse_and_predict: scores must be (h,w,4), got ", scores->value.shape_str());
  // Log scores are sums over all feature dimensions; rescale to per-dimension
  // units so they land in the convs' linear range next to the O(1) mask
  // encoding. The softmax variant is already normalized.
  ag::Value s = softmax_scores
                    ? ag::channel_softmax(scores)
                    : ag::mul_scalar(scores, 1.0 / P.cfg.width_features);
  ag::Value h = ag::relu(layer(P, "fu.l1", ag::concat_channels({s, mask_encoding})));
  ag::Value enc = ag::relu(layer(P, "fu.l2", h));
  ag::Value logits = layer(P, "fu.head", enc);
  return {enc, logits};
}

ag::Value refine(const ag::Value& mask_encoding, const ag::Value& skip,
                 const TapedParams& P) {
  ag::Value u1 = ag::upsample2x(mask_encoding);
  check(u1->value.dim(0) == skip->value.dim(0) && u1->value.dim(1) == skip->value.dim(1),
        "refine: skip grid ", skip->value.shape_str(),
        " does not match upsampled encoding ", u1->value.shape_str());
  ag::Value h = ag::relu(layer(P, "re.l1", ag::concat_channels({u1, skip})));
  ag::Value h2 = ag::relu(layer(P, "re.l2", ag::upsample2x(h)));
  return layer(P, "re.head", h2);
}

}  // namespace gam::seg
