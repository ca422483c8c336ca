// SPDX-License-Identifier: Apache-2.0
//
// Release gate: nine independent checks covering differentiability, oracle
// equivalence, update mechanics, normalization, the ablation orderings,
// determinism, causality and the throughput budget. Prints one verdict line
// per check and exits 0 only when all of them pass.
//
// The full run trains seven model variants and takes up to two CPU-hours;
// pass --quick to skip that one check during development.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gam/appearance.hpp"
#include "gam/autograd.hpp"
#include "gam/cli.hpp"
#include "gam/config.hpp"
#include "gam/gradcheck.hpp"
#include "gam/kernels.hpp"
#include "gam/metrics.hpp"
#include "gam/pipeline.hpp"
#include "gam/rng.hpp"
#include "gam/segnet.hpp"
#include "gam/synthvos.hpp"
#include "gam/tensor.hpp"
#include "gam/trainer.hpp"

namespace fs = std::filesystem;
using namespace gam;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor rand_tensor(Rng& rng, const std::vector<int>& shape, double lo, double hi) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// err is relative for large magnitudes and absolute near zero
double mixed_rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return in.good() ? ss.str() : std::string("<unreadable:" + p + ">");
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("gamseg");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

// ---------------------------------------------------------------- check 1
// Gradients: score map, weighted moments, the first-frame fit feeding the
// score map, and a full per-frame forward through the loss, all against
// central differences.

ag::GradCheckProblem scores_problem(uint64_t seed) {
  Rng rng(seed);
  ag::GradCheckProblem p;
  p.name = "scores";
  p.inputs = {rand_tensor(rng, {6, 6, 4}, -1.5, 1.5), rand_tensor(rng, {4}, -1.0, 1.0),
              rand_tensor(rng, {4}, 0.5, 2.0)};
  const Tensor readout = rand_tensor(rng, {6, 6}, -1.0, 1.0);
  p.forward = [readout](ag::Tape& tape, const std::vector<ag::Value>& in) {
    return ag::sum(ag::mul(ag::gauss_score(in[0], in[1], in[2]), tape.constant(readout)));
  };
  return p;
}

ag::GradCheckProblem moments_problem(uint64_t seed) {
  Rng rng(seed);
  ag::GradCheckProblem p;
  p.name = "weighted_moments";
  p.inputs = {rand_tensor(rng, {6, 6, 4}, -1.0, 1.0), rand_tensor(rng, {6, 6}, 0.05, 1.0),
              rand_tensor(rng, {4}, 0.05, 0.5)};
  const Tensor cm = rand_tensor(rng, {4}, -1.0, 1.0);
  const Tensor cv = rand_tensor(rng, {4}, -1.0, 1.0);
  p.forward = [cm, cv](ag::Tape& tape, const std::vector<ag::Value>& in) {
    const auto [m, v] = app::weighted_moments(in[0], in[1], in[2]);
    return ag::add(ag::sum(ag::mul(m, tape.constant(cm))),
                   ag::sum(ag::mul(v, tape.constant(cv))));
  };
  return p;
}

Verdict check_gradients() {
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;
  const auto run_path = [&](const char* label, auto&& make, int coords_per_input) {
    double worst = 0.0;
    bool path_ok = true;
    for (int t = 0; t < 10; ++t) {
      const ag::GradCheckProblem p = make(derive_seed(41, static_cast<uint64_t>(t)));
      const ag::GradCheckReport r =
          ag::grad_check(p, 1e-5, coords_per_input, derive_seed(97, static_cast<uint64_t>(t)));
      worst = std::max(worst, r.max_rel_err);
      path_ok = path_ok && r.pass(1e-4);
    }
    pass = pass && path_ok;
    if (!detail.empty()) detail += ", ";
    detail += std::string(label) + " " + fmt("%.2e", worst);
  };
  run_path("scores", scores_problem, 0);
  run_path("moments", moments_problem, 0);
  run_path("first_frame_chain", pipe::appearance_chain_problem, 0);
  run_path("frame_forward", pipe::frame_forward_problem, 4);
  const double el = seconds_since(t0);
  pass = pass && el < 120.0;
  return {pass, "max rel err: " + detail + "; " + fmt("%.1f", el) + "s (budget 120s)"};
}

// ---------------------------------------------------------------- check 2
// Weighted first and second moments against a brute-force loop.

Verdict check_moments_oracle() {
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < 25; ++t) {
    const int h = static_cast<int>(rng.uniform_int(2, 8));
    const int w = static_cast<int>(rng.uniform_int(2, 8));
    const int D = static_cast<int>(rng.uniform_int(1, 6));
    const Tensor x = rand_tensor(rng, {h, w, D}, -2.0, 2.0);
    Tensor a = rand_tensor(rng, {h, w}, 0.0, 1.0);
    a[0] = 0.7;  // keep the total mass positive
    const Tensor r = rand_tensor(rng, {D}, 0.01, 0.5);

    ag::Tape tape;
    const auto [mv, vv] =
        app::weighted_moments(tape.constant(x), tape.constant(a), tape.constant(r));

    double mass = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) mass += a[i];
    for (int d = 0; d < D; ++d) {
      double s = 0.0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) s += a.at(i, j) * x.at(i, j, d);
      const double mean = s / mass;
      double sq = 0.0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double c = x.at(i, j, d) - mean;
          sq += a.at(i, j) * c * c;
        }
      const double var = sq / mass + r[d];
      worst = std::max(worst, mixed_rel_err(mv->value[d], mean));
      worst = std::max(worst, mixed_rel_err(vv->value[d], var));
    }
  }
  return {worst <= 1e-12, "25 instances, worst err " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- check 3
// Update mechanics: a zero blend rate freezes the state bit for bit, a full
// blend on the same frame re-derives the first-frame base fit, and residual
// assignments vanish when the posteriors equal the assignments.

Verdict check_update_mechanics() {
  Rng rng(303);
  const int h = 6, w = 6, D = 4;
  const Tensor x0 = rand_tensor(rng, {h, w, D}, -1.0, 1.0);
  Tensor y0({h, w});
  for (int64_t i = 0; i < y0.numel(); ++i) y0[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  y0.at(0, 0) = 0.0;
  y0.at(h - 1, w - 1) = 1.0;

  ag::Tape tape;
  std::array<ag::Value, app::n_components> reg;
  for (auto& r : reg) r = tape.constant(rand_tensor(rng, {D}, 0.05, 0.3));

  // frozen blend: ten frames leave every component bit-identical
  app::UpdateConfig frozen;
  frozen.lambda = 0.0;
  app::MixtureParams st =
      app::init_first_frame(tape.constant(x0), y0, reg, frozen, false);
  std::array<Tensor, app::n_components> mean0, var0;
  for (int k = 0; k < app::n_components; ++k) {
    mean0[static_cast<size_t>(k)] = st.mean[static_cast<size_t>(k)]->value;
    var0[static_cast<size_t>(k)] = st.var[static_cast<size_t>(k)]->value;
  }
  bool frozen_ok = true;
  for (int f = 0; f < 10; ++f) {
    const ag::Value xf = tape.constant(rand_tensor(rng, {h, w, D}, -1.0, 1.0));
    const ag::Value yf = tape.constant(rand_tensor(rng, {h, w}, 0.0, 1.0));
    st = app::update(xf, yf, st, reg, frozen, false, false);
    for (int k = 0; k < app::n_components; ++k) {
      frozen_ok = frozen_ok &&
                  max_abs_diff(st.mean[static_cast<size_t>(k)]->value,
                               mean0[static_cast<size_t>(k)]) == 0.0 &&
                  max_abs_diff(st.var[static_cast<size_t>(k)]->value,
                               var0[static_cast<size_t>(k)]) == 0.0;
    }
  }

  // full blend on the identical frame re-derives the base fit
  app::UpdateConfig full;
  full.lambda = 1.0;
  const app::MixtureParams a =
      app::init_first_frame(tape.constant(x0), y0, reg, full, false);
  const app::MixtureParams b =
      app::update(tape.constant(x0), tape.constant(y0), a, reg, full, false, false);
  double base_err = 0.0;
  for (int k = 0; k < 2; ++k) {
    base_err = std::max(base_err, max_abs_diff(a.mean[static_cast<size_t>(k)]->value,
                                               b.mean[static_cast<size_t>(k)]->value));
    base_err = std::max(base_err, max_abs_diff(a.var[static_cast<size_t>(k)]->value,
                                               b.var[static_cast<size_t>(k)]->value));
  }

  // residual mass is exactly zero when posteriors equal assignments
  const Tensor ys = rand_tensor(rng, {h, w}, 0.1, 0.9);
  const ag::Value ysv = tape.constant(ys);
  const auto [a0, a1] = app::base_assignments(ysv);
  Tensor post({h, w, 2});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      post.at(i, j, 0) = a0->value.at(i, j);
      post.at(i, j, 1) = a1->value.at(i, j);
    }
  const auto [r0, r1] = app::residual_assignments(tape.constant(post), a0, a1);
  bool residual_zero = true;
  for (int64_t i = 0; i < r0->value.numel(); ++i)
    residual_zero = residual_zero && r0->value[i] == 0.0 && r1->value[i] == 0.0;

  const bool pass = frozen_ok && base_err <= 1e-9 && residual_zero;
  return {pass, std::string("zero-blend bit-identical: ") + (frozen_ok ? "yes" : "NO") +
                    "; full-blend base err " + fmt("%.2e", base_err) +
                    "; residuals exactly zero: " + (residual_zero ? "yes" : "NO")};
}

// ---------------------------------------------------------------- check 4
// Posteriors and aggregated masks are probability distributions.

Verdict check_normalization() {
  Rng rng(404);
  const int h = 20, w = 50, D = 6;  // 1000 pixels
  ag::Tape tape;
  app::MixtureParams st;
  for (int k = 0; k < app::n_components; ++k) {
    st.mean[static_cast<size_t>(k)] = tape.constant(rand_tensor(rng, {D}, -1.0, 1.0));
    st.var[static_cast<size_t>(k)] = tape.constant(rand_tensor(rng, {D}, 0.3, 2.0));
  }
  const ag::Value x = tape.constant(rand_tensor(rng, {h, w, D}, -2.0, 2.0));
  const ag::Value scores = app::score_map(x, st, false);
  const ag::Value post4 = ag::channel_softmax(scores);
  const ag::Value post2 =
      app::base_posteriors(ag::channel(scores, 0), ag::channel(scores, 1));

  double worst4 = 0.0, worst2 = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s4 = 0.0, s2 = 0.0;
      for (int c = 0; c < app::n_components; ++c) s4 += post4->value.at(i, j, c);
      for (int c = 0; c < 2; ++c) s2 += post2->value.at(i, j, c);
      worst4 = std::max(worst4, std::abs(s4 - 1.0));
      worst2 = std::max(worst2, std::abs(s2 - 1.0));
    }

  double worst_agg = 0.0;
  for (int M : {1, 2, 3, 5}) {
    std::vector<ag::Value> fg;
    for (int m = 0; m < M; ++m) {
      Tensor t = rand_tensor(rng, {h, w}, 0.0, 1.0);
      t[0] = 0.0;  // exercise the clamp at both ends
      t[1] = 1.0;
      fg.push_back(tape.constant(t));
    }
    const ag::Value agg = pipe::aggregate(fg);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double s = 0.0;
        for (int c = 0; c <= M; ++c) s += agg->value.at(i, j, c);
        worst_agg = std::max(worst_agg, std::abs(s - 1.0));
      }
  }
  const bool pass = worst4 <= 1e-9 && worst2 <= 1e-9 && worst_agg <= 1e-9;
  return {pass, "unit-sum error: 4-way " + fmt("%.2e", worst4) + ", base " +
                    fmt("%.2e", worst2) + ", aggregation " + fmt("%.2e", worst_agg)};
}

// ---------------------------------------------------------------- check 5
// Model-variant orderings on the synthetic benchmark (300 train / 40 val,
// 64x64, one shared seed and schedule; the full model must clearly beat the
// variants that remove its core mechanisms).

Verdict check_ablation_orderings(const std::string& dataset_dir, const std::string& out_dir) {
  const auto t0 = Clock::now();
  cfg::RunConfig base;
  base.dataset = dataset_dir;
  base.out = out_dir;
  base.seed = 1;
  base.stage1_epochs = 5;
  base.stage2_epochs = 2;
  base.val_every = 0;

  const std::vector<train::VariantResult> rows = train::run_ablation(base, true);
  std::map<std::string, met::EvalSummary> by_name;
  for (const auto& r : rows) by_name[r.name] = r.summary;
  const met::EvalSummary full = by_name.at("full");

  const auto pts = [](double x) { return 100.0 * x; };
  std::string detail = "G(pts): ";
  for (const auto& r : rows)
    detail += r.name + " " + fmt("%.1f", pts(r.summary.G)) + "  ";

  bool pass = true;
  const auto need = [&](bool cond, const std::string& label) {
    if (!cond) {
      pass = false;
      detail += "[failed: " + label + "] ";
    }
  };
  need(pts(full.G - by_name.at("no_appearance").G) >= 5.0, "full-no_appearance>=5");
  need(pts(full.G - by_name.at("appearance_softmax").G) >= 2.0,
       "full-appearance_softmax>=2");
  need(pts(full.G - by_name.at("no_end_to_end").G) >= 2.0, "full-no_end_to_end>=2");
  for (const char* v : {"no_maskprop", "unimodal", "no_update"})
    need(pts(full.G - by_name.at(v).G) >= -1.0, std::string("full>=") + v + "-1");
  const double unseen_gap = full.J_unseen - by_name.at("no_appearance").J_unseen;
  const double seen_gap = full.J_seen - by_name.at("no_appearance").J_seen;
  need(unseen_gap > seen_gap, "unseen J gap exceeds seen J gap");

  const double el = seconds_since(t0);
  need(el <= 7200.0, "runtime<=2h");
  detail += "unseen/seen J gap " + fmt("%.1f", pts(unseen_gap)) + "/" +
            fmt("%.1f", pts(seen_gap)) + "; " + fmt("%.0f", el) + "s";
  return {pass, detail};
}

// ---------------------------------------------------------------- check 6
// Convolution against a nested-loop oracle; region and boundary metrics
// against exhaustive / brute-force oracles.

double conv_oracle_err(Rng& rng) {
  const int H = static_cast<int>(rng.uniform_int(3, 11));
  const int W = static_cast<int>(rng.uniform_int(3, 11));
  const int Cin = static_cast<int>(rng.uniform_int(1, 5));
  const int Cout = static_cast<int>(rng.uniform_int(1, 5));
  const int k = rng.bernoulli(0.5) ? 3 : 1;
  const int stride = rng.bernoulli(0.5) ? 2 : 1;
  const int dilation = k == 3 && rng.bernoulli(0.5) ? 2 : 1;
  const auto s = kernels::conv2d_shape(H, W, Cin, k, Cout, stride, dilation);

  const Tensor x = rand_tensor(rng, {H, W, Cin}, -1.0, 1.0);
  const Tensor w = rand_tensor(rng, {k, k, Cin, Cout}, -1.0, 1.0);
  const Tensor b = rand_tensor(rng, {Cout}, -0.5, 0.5);
  Tensor y({s.Ho, s.Wo, Cout});
  kernels::conv2d_forward(s, x.data(), w.data(), b.data(), y.data(),
                          kernels::Exec::auto_dispatch);

  double worst = 0.0;
  for (int oi = 0; oi < s.Ho; ++oi)
    for (int oj = 0; oj < s.Wo; ++oj)
      for (int oc = 0; oc < Cout; ++oc) {
        double acc = b[oc];
        for (int ki = 0; ki < k; ++ki)
          for (int kj = 0; kj < k; ++kj) {
            const int ii = oi * stride - s.pad + ki * dilation;
            const int jj = oj * stride - s.pad + kj * dilation;
            if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
            for (int ic = 0; ic < Cin; ++ic)
              acc += x.at(ii, jj, ic) * w[((int64_t{ki} * k + kj) * Cin + ic) * Cout + oc];
          }
        worst = std::max(worst, mixed_rel_err(y.at(oi, oj, oc), acc));
      }
  return worst;
}

std::vector<std::pair<int, int>> boundary_oracle(const Tensor& m) {
  const int H = m.dim(0), W = m.dim(1);
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      if (m.at(i, j) == 0.0) continue;
      const bool edge = i == 0 || i == H - 1 || j == 0 || j == W - 1 ||
                        m.at(i - 1, j) == 0.0 || m.at(i + 1, j) == 0.0 ||
                        m.at(i, j - 1) == 0.0 || m.at(i, j + 1) == 0.0;
      if (edge) out.emplace_back(i, j);
    }
  return out;
}

double contour_f_oracle(const Tensor& pred, const Tensor& gt, int radius) {
  const auto bp = boundary_oracle(pred);
  const auto bg = boundary_oracle(gt);
  if (bp.empty() && bg.empty()) return 1.0;
  if (bp.empty() || bg.empty()) return 0.0;
  const auto matched = [radius](const std::pair<int, int>& p,
                                const std::vector<std::pair<int, int>>& other) {
    for (const auto& q : other) {
      const int di = p.first - q.first, dj = p.second - q.second;
      if (di * di + dj * dj <= radius * radius) return true;
    }
    return false;
  };
  int tp_p = 0, tp_g = 0;
  for (const auto& p : bp) tp_p += matched(p, bg);
  for (const auto& q : bg) tp_g += matched(q, bp);
  const double precision = static_cast<double>(tp_p) / static_cast<double>(bp.size());
  const double recall = static_cast<double>(tp_g) / static_cast<double>(bg.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Verdict check_conv_and_metric_oracles() {
  Rng rng(606);
  double conv_worst = 0.0;
  for (int t = 0; t < 25; ++t) conv_worst = std::max(conv_worst, conv_oracle_err(rng));

  // every pair of 3x3 binary masks
  double j_worst = 0.0;
  for (int a = 0; a < 512; ++a)
    for (int b = 0; b < 512; ++b) {
      Tensor ma({3, 3}), mb({3, 3});
      int inter = 0, uni = 0;
      for (int bit = 0; bit < 9; ++bit) {
        const int pa = (a >> bit) & 1, pb = (b >> bit) & 1;
        ma[bit] = pa;
        mb[bit] = pb;
        inter += pa & pb;
        uni += pa | pb;
      }
      const double oracle = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
      j_worst = std::max(j_worst, std::abs(met::jaccard(ma, mb) - oracle));
    }

  double f_worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    Tensor a({8, 8}), b({8, 8});
    for (int64_t i = 0; i < a.numel(); ++i) {
      a[i] = rng.bernoulli(0.45) ? 1.0 : 0.0;
      b[i] = rng.bernoulli(0.45) ? 1.0 : 0.0;
    }
    const int radius = t % 3;
    f_worst = std::max(
        f_worst, std::abs(met::contour_f(a, b, radius) - contour_f_oracle(a, b, radius)));
  }

  const bool pass = conv_worst <= 1e-12 && j_worst <= 1e-12 && f_worst <= 1e-12;
  return {pass, "worst err: conv " + fmt("%.2e", conv_worst) + ", region metric " +
                    fmt("%.2e", j_worst) + " (all 262144 pairs), boundary metric " +
                    fmt("%.2e", f_worst)};
}

// ---------------------------------------------------------------- check 7
// Bit-for-bit determinism of dataset synthesis and training.

bool dirs_identical(const std::string& a, const std::string& b, int* files) {
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a).string());
  std::sort(rel.begin(), rel.end());
  *files = static_cast<int>(rel.size());
  std::vector<std::string> rel_b;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b).string());
  std::sort(rel_b.begin(), rel_b.end());
  if (rel != rel_b) return false;
  for (const auto& r : rel)
    if (slurp(a + "/" + r) != slurp(b + "/" + r)) return false;
  return true;
}

Verdict check_determinism(const std::string& work) {
  const std::string spec_path = work + "/det.spec";
  {
    std::ofstream os(spec_path, std::ios::binary);
    os << "height=32\nwidth=32\ntrain_sequences=3\nval_sequences=2\n"
          "train_frames=4\nval_frames=4\nmin_objects=1\nmax_objects=2\n"
          "min_size=4\nmax_size=8\nseed=77\n";
  }
  if (run_cli({"synth", spec_path, work + "/ds_a"}) != 0 ||
      run_cli({"synth", spec_path, work + "/ds_b"}) != 0)
    return {false, "synth command failed"};
  int files = 0;
  const bool ds_same = dirs_identical(work + "/ds_a", work + "/ds_b", &files);

  const std::vector<std::string> tiny = {
      "--width_features=4", "--width_skip=3",    "--width_mask=4",
      "--width_fusion=4",   "--width_refine1=3", "--width_refine2=2",
      "--stage1_epochs=1",  "--stage1_frames=3", "--stage2_epochs=1",
      "--stage2_frames=4",  "--batch=2",         "--seed=11"};
  for (const char* out : {"run_a", "run_b"}) {
    std::vector<std::string> args = {"train", "--dataset", work + "/ds_a", "--out",
                                     work + "/" + out};
    args.insert(args.end(), tiny.begin(), tiny.end());
    if (run_cli(args) != 0) return {false, "train command failed"};
  }
  const std::string ck_a = slurp(work + "/run_a/checkpoint.gam");
  const bool ck_same = !ck_a.empty() && ck_a == slurp(work + "/run_b/checkpoint.gam");

  return {ds_same && ck_same,
          "dataset rebuilt identically (" + std::to_string(files) +
              " files): " + (ds_same ? "yes" : "NO") +
              "; retrained checkpoint identical (" + std::to_string(ck_a.size()) +
              " bytes): " + (ck_same ? "yes" : "NO")};
}

// ---------------------------------------------------------------- check 8
// Causality: truncating a 16-frame validation sequence must reproduce the
// prefix outputs bit for bit.

Verdict check_causality(const std::string& dataset_dir) {
  const std::vector<std::string> ids = vos::list_sequences(dataset_dir + "/val");
  if (ids.empty()) return {false, "no validation sequences"};
  const vos::LoadedSequence sq = vos::load_sequence(dataset_dir + "/val/" + ids[0]);
  if (sq.frames.size() != 16)
    return {false, "expected a 16-frame sequence, got " +
                       std::to_string(sq.frames.size())};

  pipe::ModelSpec spec;
  spec.net.init_seed = 1;
  const seg::SegNetParams params = seg::SegNetParams::init(spec.net);
  const std::vector<Tensor> full =
      pipe::run_sequence(params, spec, sq.frames, sq.masks[0]);

  bool pass = true;
  for (const size_t cut : {size_t{2}, size_t{8}}) {
    const std::vector<Tensor> prefix(sq.frames.begin(),
                                     sq.frames.begin() + static_cast<long>(cut));
    const std::vector<Tensor> part = pipe::run_sequence(params, spec, prefix, sq.masks[0]);
    if (part.size() != cut) pass = false;
    for (size_t t = 0; pass && t < cut; ++t)
      if (max_abs_diff(part[t], full[t]) != 0.0) pass = false;
  }
  return {pass, std::string("prefix runs (2 and 8 of 16 frames) bit-identical: ") +
                    (pass ? "yes" : "NO") + " on sequence " + ids[0]};
}

// ---------------------------------------------------------------- check 9
// Per-frame appearance budget: scoring plus the state update on a 64x64x32
// feature map with four components, single worker.

Verdict check_throughput() {
  kernels::set_jobs(1);
  Rng rng(909);
  const int h = 64, w = 64, D = 32;
  const Tensor x = rand_tensor(rng, {h, w, D}, -1.0, 1.0);
  const Tensor ys = rand_tensor(rng, {h, w}, 0.0, 1.0);
  Tensor y0({h, w});
  for (int64_t i = 0; i < y0.numel(); ++i) y0[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  y0[0] = 0.0;
  y0[1] = 1.0;
  const app::UpdateConfig cfg;

  double best = 1e30;
  for (int rep = 0; rep < 5; ++rep) {
    ag::Tape tape;
    std::array<ag::Value, app::n_components> reg;
    for (auto& r : reg) r = tape.constant(rand_tensor(rng, {D}, 0.05, 0.2));
    const ag::Value xv = tape.constant(x);
    const app::MixtureParams st = app::init_first_frame(xv, y0, reg, cfg, false);
    const ag::Value ysv = tape.constant(ys);

    const auto t0 = Clock::now();
    const ag::Value scores = app::score_map(xv, st, false);
    const app::MixtureParams next = app::update(xv, ysv, st, reg, cfg, false, false);
    const double el = seconds_since(t0);
    if (scores->value.numel() != int64_t{h} * w * app::n_components ||
        !next.mean[0]->value.defined())
      return {false, "unexpected output shapes"};
    best = std::min(best, el);
  }
  kernels::set_jobs(0);
  return {best < 0.1, "scoring + update on 64x64x32, 4 components: best of 5 = " +
                          fmt("%.1f", best * 1000.0) + "ms (budget 100ms)"};
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  const std::string work = "acceptance_work";
  fs::remove_all(work);
  fs::create_directories(work);

  // Shared 64x64 benchmark dataset: 300 train / 40 val, 8 / 16 frames.
  std::fprintf(stderr, "[acceptance] building the benchmark dataset...\n");
  vos::DatasetParams dp;
  dp.seed = 9;
  vos::build_dataset(dp, work + "/ds");

  std::vector<std::pair<std::string, Verdict>> results(9);
  const auto run = [&](int id, const std::string& label, auto&& f) {
    std::fprintf(stderr, "[acceptance] %d: %s...\n", id, label.c_str());
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    results[static_cast<size_t>(id - 1)] = {label, v};
  };

  run(1, "gradients vs central differences", check_gradients);
  run(2, "moment oracle equivalence", check_moments_oracle);
  run(3, "update mechanics", check_update_mechanics);
  run(4, "normalization invariants", check_normalization);
  run(6, "conv and metric oracles", check_conv_and_metric_oracles);
  run(7, "synthesis and training determinism", [&] { return check_determinism(work); });
  run(8, "sequence causality", [&] { return check_causality(work + "/ds"); });
  run(9, "appearance throughput budget", check_throughput);
  if (quick) {
    results[4] = {"model-variant orderings", {false, "skipped (--quick)"}};
  } else {
    run(5, "model-variant orderings",
        [&] { return check_ablation_orderings(work + "/ds", work + "/ablation"); });
  }

  bool all = true;
  std::printf("\n");
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& [label, v] = results[i];
    std::printf("criterion %zu [%s]: %s — %s\n", i + 1, label.c_str(),
                v.pass ? "PASS" : "FAIL", v.detail.c_str());
    all = all && v.pass;
  }
  std::printf("acceptance: %s\n", all ? "ALL PASS" : "FAILURES PRESENT");
  return all ? 0 : 1;
}
