// SPDX-License-Identifier: Apache-2.0
#include "gam/config.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gam/error.hpp"
#include "gam/kv.hpp"

namespace gam::cfg {

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "dataset",        "out",
      "seed",           "jobs",
      "width_features", "width_skip",
      "width_mask",     "width_fusion",
      "width_refine1",  "width_refine2",
      "lambda",         "eps_mass_scale",
      "no_appearance",  "no_maskprop",
      "unimodal",       "no_update",
      "appearance_softmax", "no_end_to_end",
      "stage1_epochs",  "stage1_frames",
      "stage2_epochs",  "stage2_frames",
      "batch",          "lr",
      "lr_decay",       "weight_decay",
      "stage2_lr",      "stage2_lr_decay",
      "stage2_weight_decay", "val_every"};
  return keys;
}

void apply_key(RunConfig& c, const std::string& origin, const std::string& key,
               const std::string& value, int line) {
  const kv::KVLine e{key, value, line};
  const auto i = [&](int64_t lo, int64_t hi) {
    return static_cast<int>(kv::parse_int(origin, e, lo, hi));
  };
  const auto r = [&](double lo, double hi) { return kv::parse_real(origin, e, lo, hi); };
  const auto b = [&]() { return kv::parse_bool(origin, e); };

  if (key == "dataset") c.dataset = value;
  else if (key == "out") c.out = value;
  else if (key == "seed") c.seed = kv::parse_u64(origin, e);
  else if (key == "jobs") c.jobs = i(0, 1024);
  else if (key == "width_features") c.width_features = i(1, 512);
  else if (key == "width_skip") c.width_skip = i(1, 512);
  else if (key == "width_mask") c.width_mask = i(1, 512);
  else if (key == "width_fusion") c.width_fusion = i(1, 512);
  else if (key == "width_refine1") c.width_refine1 = i(1, 512);
  else if (key == "width_refine2") c.width_refine2 = i(1, 512);
  else if (key == "lambda") c.lambda = r(0.0, 1.0);
  else if (key == "eps_mass_scale") c.eps_mass_scale = r(0.0, 1.0);
  else if (key == "no_appearance") c.no_appearance = b();
  else if (key == "no_maskprop") c.no_maskprop = b();
  else if (key == "unimodal") c.unimodal = b();
  else if (key == "no_update") c.no_update = b();
  else if (key == "appearance_softmax") c.appearance_softmax = b();
  else if (key == "no_end_to_end") c.no_end_to_end = b();
  else if (key == "stage1_epochs") c.stage1_epochs = i(0, 100000);
  else if (key == "stage1_frames") c.stage1_frames = i(2, 1000);
  else if (key == "stage2_epochs") c.stage2_epochs = i(0, 100000);
  else if (key == "stage2_frames") c.stage2_frames = i(2, 1000);
  else if (key == "batch") c.batch = i(1, 65536);
  else if (key == "lr") c.lr = r(0.0, 100.0);
  else if (key == "lr_decay") c.lr_decay = r(0.0, 1.0);
  else if (key == "weight_decay") c.weight_decay = r(0.0, 1.0);
  else if (key == "stage2_lr") c.stage2_lr = r(0.0, 100.0);
  else if (key == "stage2_lr_decay") c.stage2_lr_decay = r(0.0, 1.0);
  else if (key == "stage2_weight_decay") c.stage2_weight_decay = r(0.0, 1.0);
  else if (key == "val_every") c.val_every = i(0, 100000);
  else
    throw config_error(origin + ":" + std::to_string(line) + ": unknown key '" + key +
                       "'");
}

RunConfig parse_run_config(const std::string& path) {
  RunConfig c;
  for (const auto& e : kv::parse_file(path)) apply_key(c, path, e.key, e.value, e.line);
  return c;
}

namespace {

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string resolved_text(const RunConfig& c) {
  std::ostringstream os;
  os << "dataset=" << c.dataset << "\n";
  os << "out=" << c.out << "\n";
  os << "seed=" << c.seed << "\n";
  os << "jobs=" << c.jobs << "\n";
  os << "width_features=" << c.width_features << "\n";
  os << "width_skip=" << c.width_skip << "\n";
  os << "width_mask=" << c.width_mask << "\n";
  os << "width_fusion=" << c.width_fusion << "\n";
  os << "width_refine1=" << c.width_refine1 << "\n";
  os << "width_refine2=" << c.width_refine2 << "\n";
  os << "lambda=" << fmt_real(c.lambda) << "\n";
  os << "eps_mass_scale=" << fmt_real(c.eps_mass_scale) << "\n";
  os << "no_appearance=" << (c.no_appearance ? 1 : 0) << "\n";
  os << "no_maskprop=" << (c.no_maskprop ? 1 : 0) << "\n";
  os << "unimodal=" << (c.unimodal ? 1 : 0) << "\n";
  os << "no_update=" << (c.no_update ? 1 : 0) << "\n";
  os << "appearance_softmax=" << (c.appearance_softmax ? 1 : 0) << "\n";
  os << "no_end_to_end=" << (c.no_end_to_end ? 1 : 0) << "\n";
  os << "stage1_epochs=" << c.stage1_epochs << "\n";
  os << "stage1_frames=" << c.stage1_frames << "\n";
  os << "stage2_epochs=" << c.stage2_epochs << "\n";
  os << "stage2_frames=" << c.stage2_frames << "\n";
  os << "batch=" << c.batch << "\n";
  os << "lr=" << fmt_real(c.lr) << "\n";
  os << "lr_decay=" << fmt_real(c.lr_decay) << "\n";
  os << "weight_decay=" << fmt_real(c.weight_decay) << "\n";
  os << "stage2_lr=" << fmt_real(c.stage2_lr) << "\n";
  os << "stage2_lr_decay=" << fmt_real(c.stage2_lr_decay) << "\n";
  os << "stage2_weight_decay=" << fmt_real(c.stage2_weight_decay) << "\n";
  os << "val_every=" << c.val_every << "\n";
  return os.str();
}

void write_resolved(const RunConfig& c, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open ", path, " for writing");
  os << resolved_text(c);
  check(os.good(), "write failed: ", path);
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {
      "full",      "no_appearance",      "no_maskprop",  "unimodal",
      "no_update", "appearance_softmax", "no_end_to_end"};
  return names;
}

void set_ablation(RunConfig& c, const std::string& variant) {
  c.no_appearance = c.no_maskprop = c.unimodal = c.no_update = false;
  c.appearance_softmax = c.no_end_to_end = false;
  if (variant == "full") return;
  if (variant == "no_appearance") c.no_appearance = true;
  else if (variant == "no_maskprop") c.no_maskprop = true;
  else if (variant == "unimodal") c.unimodal = true;
  else if (variant == "no_update") c.no_update = true;
  else if (variant == "appearance_softmax") c.appearance_softmax = true;
  else if (variant == "no_end_to_end") c.no_end_to_end = true;
  else
    throw config_error("unknown ablation variant '" + variant + "'");
}

}  // namespace gam::cfg
