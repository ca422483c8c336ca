// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "gam/rng.hpp"
#include "gam/segnet.hpp"

using namespace gam;
using ag::Tape;
using ag::Value;

namespace {

Tensor rand_t(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

seg::SegNetConfig tiny_config() {
  seg::SegNetConfig c;
  c.width_features = 4;
  c.width_skip = 3;
  c.width_mask = 4;
  c.width_fusion = 4;
  c.width_refine1 = 3;
  c.width_refine2 = 2;
  c.init_seed = 321;
  return c;
}

}  // namespace

TEST_CASE("layer census is consistent and unique") {
  seg::SegNetConfig cfg;
  auto specs = seg::conv_specs(cfg);
  REQUIRE(!specs.empty());
  std::set<std::string> names;
  for (const auto& s : specs) {
    CHECK(names.insert(s.name).second);
    CHECK(s.k >= 1);
    CHECK(s.cin >= 1);
    CHECK(s.cout >= 1);
  }
  // widths flow through the chain
  CHECK(specs.front().cin == 3);

  seg::SegNetConfig bad;
  bad.width_features = 0;
  CHECK_THROWS_AS(seg::conv_specs(bad), error);
}

TEST_CASE("parameter init is deterministic and census-stable") {
  seg::SegNetConfig cfg = tiny_config();
  seg::SegNetParams a = seg::SegNetParams::init(cfg);
  seg::SegNetParams b = seg::SegNetParams::init(cfg);
  REQUIRE(a.tensors().size() == b.tensors().size());
  for (size_t i = 0; i < a.tensors().size(); ++i) {
    CHECK(a.tensors()[i].first == b.tensors()[i].first);
    const Tensor& ta = a.tensors()[i].second;
    const Tensor& tb = b.tensors()[i].second;
    REQUIRE(ta.same_shape(tb));
    for (int64_t j = 0; j < ta.numel(); ++j) CHECK(ta[j] == tb[j]);
  }
  CHECK(a.census() == b.census());

  seg::SegNetConfig other = cfg;
  other.init_seed = 99;
  seg::SegNetParams c = seg::SegNetParams::init(other);
  // same census, different weights
  CHECK(c.census() == a.census());
  double diff = 0;
  for (size_t i = 0; i < a.tensors().size(); ++i)
    diff += max_abs_diff(a.tensors()[i].second, c.tensors()[i].second);
  CHECK(diff > 0.0);

  // biases start at zero, the appearance regularizers at softplus^-1(0.1)
  for (const auto& [name, t] : a.tensors()) {
    if (name.size() > 2 && name.substr(name.size() - 2) == ".b")
      for (int64_t j = 0; j < t.numel(); ++j) CHECK(t[j] == 0.0);
  }
  CHECK(a.at("app.r0_raw").numel() == cfg.width_features);
}

TEST_CASE("from_tensors validates the census strictly") {
  seg::SegNetConfig cfg = tiny_config();
  seg::SegNetParams p = seg::SegNetParams::init(cfg);

  NamedTensors good = p.tensors();
  seg::SegNetParams q = seg::SegNetParams::from_tensors(cfg, good);
  CHECK(q.census() == p.census());

  NamedTensors short_list(good.begin(), good.end() - 1);
  CHECK_THROWS_AS(seg::SegNetParams::from_tensors(cfg, short_list), error);

  NamedTensors renamed = good;
  renamed[0].first = "enc.l1.weights";
  CHECK_THROWS_AS(seg::SegNetParams::from_tensors(cfg, renamed), error);

  NamedTensors reshaped = good;
  reshaped[0].second = Tensor({1, 1, 3, 3});
  CHECK_THROWS_AS(seg::SegNetParams::from_tensors(cfg, reshaped), error);
}

TEST_CASE("encode meets the stride-4 and stride-2 shape contract") {
  seg::SegNetConfig cfg = tiny_config();
  seg::SegNetParams p = seg::SegNetParams::init(cfg);
  Tape tape;
  seg::TapedParams P = seg::lift(tape, p, false);
  Rng rng(5);
  Value img = tape.constant(rand_t({16, 12, 3}, rng, 0, 1));
  seg::EncodeOut out = seg::encode(img, P);
  CHECK(out.features->value.shape() == std::vector<int>{4, 3, cfg.width_features});
  CHECK(out.skip->value.shape() == std::vector<int>{8, 6, cfg.width_skip});

  Value odd = tape.constant(rand_t({10, 12, 3}, rng));
  CHECK_THROWS_AS(seg::encode(odd, P), error);
  Value gray = tape.constant(rand_t({16, 12}, rng));
  CHECK_THROWS_AS(seg::encode(gray, P), error);
}

TEST_CASE("zero image with zero biases encodes to zero features") {
  seg::SegNetConfig cfg = tiny_config();
  seg::SegNetParams p = seg::SegNetParams::init(cfg);  // biases are zero at init
  Tape tape;
  seg::TapedParams P = seg::lift(tape, p, false);
  Value img = tape.constant(Tensor({8, 8, 3}));
  seg::EncodeOut out = seg::encode(img, P);
  for (int64_t i = 0; i < out.features->value.numel(); ++i)
    CHECK(out.features->value[i] == 0.0);
  for (int64_t i = 0; i < out.skip->value.numel(); ++i) CHECK(out.skip->value[i] == 0.0);
}

TEST_CASE("propagation, fusion and refinement shape chain") {
  seg::SegNetConfig cfg = tiny_config();
  seg::SegNetParams p = seg::SegNetParams::init(cfg);
  Tape tape;
  seg::TapedParams P = seg::lift(tape, p, false);
  Rng rng(6);
  const int H = 16, W = 16;
  Value img = tape.constant(rand_t({H, W, 3}, rng, 0, 1));
  seg::EncodeOut e = seg::encode(img, P);
  const int h = H / 4, w = W / 4;

  Value y_prev = tape.constant(rand_t({h, w}, rng, 0, 1));
  Value y0 = tape.constant(rand_t({h, w}, rng, 0, 1));
  Value prop = seg::mask_propagate(e.features, y_prev, e.features, y0, P);
  CHECK(prop->value.shape() == std::vector<int>{h, w, cfg.width_mask});

  Value scores = tape.constant(rand_t({h, w, 4}, rng, -10, 10));
  seg::FuseOut f = seg::fuse_and_predict(scores, prop, P, false);
  CHECK(f.mask_encoding->value.shape() == std::vector<int>{h, w, cfg.width_fusion});
  CHECK(f.coarse_logits->value.shape() == std::vector<int>{h, w, 2});

  seg::FuseOut fs = seg::fuse_and_predict(scores, prop, P, true);
  CHECK(fs.coarse_logits->value.shape() == std::vector<int>{h, w, 2});
  // the two variants feed different encodings forward
  CHECK(max_abs_diff(f.coarse_logits->value, fs.coarse_logits->value) > 0.0);

  Value fine = seg::refine(f.mask_encoding, e.skip, P);
  CHECK(fine->value.shape() == std::vector<int>{H, W, 2});

  Value bad_scores = tape.constant(rand_t({h, w, 3}, rng));
  CHECK_THROWS_AS(seg::fuse_and_predict(bad_scores, prop, P, false), error);
  Value bad_skip = tape.constant(rand_t({h, w, cfg.width_skip}, rng));
  CHECK_THROWS_AS(seg::refine(f.mask_encoding, bad_skip, P), error);
}

TEST_CASE("constant inputs give spatially constant network outputs") {
  seg::SegNetConfig cfg = tiny_config();
  seg::SegNetParams p = seg::SegNetParams::init(cfg);
  Tape tape;
  seg::TapedParams P = seg::lift(tape, p, false);
  const int h = 6, w = 6;
  Value scores = tape.constant(Tensor::full({h, w, 4}, 0.3));
  Value enc = tape.constant(Tensor::full({h, w, cfg.width_mask}, -0.2));
  seg::FuseOut f = seg::fuse_and_predict(scores, enc, P, false);
  // interior pixels (away from padding) all see the same receptive field
  const Tensor& lg = f.coarse_logits->value;
  for (int i = 2; i < h - 2; ++i)
    for (int j = 2; j < w - 2; ++j)
      for (int c = 0; c < 2; ++c)
        CHECK(lg.at(i, j, c) == doctest::Approx(lg.at(2, 2, c)).epsilon(1e-12));
}

TEST_CASE("lift exposes every parameter and tracks requires_grad") {
  seg::SegNetConfig cfg = tiny_config();
  seg::SegNetParams p = seg::SegNetParams::init(cfg);
  Tape train_tape;
  seg::TapedParams train = seg::lift(train_tape, p, true);
  CHECK(train.values.size() == p.tensors().size());
  for (const auto& [name, v] : train.values) {
    CHECK(v->is_leaf);
    CHECK(v->needs_grad);
  }
  CHECK_THROWS_AS(train.at("enc.l9.w"), error);

  Tape eval_tape;
  seg::TapedParams ev = seg::lift(eval_tape, p, false);
  for (const auto& [name, v] : ev.values) CHECK(!v->needs_grad);
}
