// SPDX-License-Identifier: Apache-2.0
#include "gam/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "gam/error.hpp"
#include "gam/kernels.hpp"
#include "gam/rng.hpp"
#include "gam/synthvos.hpp"
#include "gam/tensor_io.hpp"

namespace fs = std::filesystem;

namespace gam::train {

pipe::ModelSpec model_spec(const cfg::RunConfig& rc) {
  pipe::ModelSpec s;
  s.net.width_features = rc.width_features;
  s.net.width_skip = rc.width_skip;
  s.net.width_mask = rc.width_mask;
  s.net.width_fusion = rc.width_fusion;
  s.net.width_refine1 = rc.width_refine1;
  s.net.width_refine2 = rc.width_refine2;
  s.net.init_seed = rc.seed;
  s.appearance.lambda = rc.lambda;
  s.appearance.eps_mass_scale = rc.eps_mass_scale;
  s.flags.no_appearance = rc.no_appearance;
  s.flags.no_maskprop = rc.no_maskprop;
  s.flags.unimodal = rc.unimodal;
  s.flags.no_update = rc.no_update;
  s.flags.appearance_softmax = rc.appearance_softmax;
  s.flags.no_end_to_end = rc.no_end_to_end;
  return s;
}

namespace {

Tensor binarize(const Tensor& ids, int id) {
  Tensor out(ids.shape());
  for (int64_t i = 0; i < ids.numel(); ++i) out[i] = ids[i] == id ? 1.0 : 0.0;
  return out;
}

bool mask_has_id(const Tensor& ids, int id) {
  for (int64_t i = 0; i < ids.numel(); ++i)
    if (ids[i] == id) return true;
  return false;
}

// Decoupled-weight-decay Adam. Decay touches conv weights only; biases and
// the appearance regularizers are pure Adam.
struct AdamState {
  int64_t t = 0;
  std::map<std::string, Tensor> m, v;
};

bool decays(const std::string& name) {
  return name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0;
}

void adam_step(seg::SegNetParams& params, const std::map<std::string, Tensor>& grads,
               AdamState& st, double lr, double wd) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++st.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (auto& [name, p] : params.tensors()) {
    const auto git = grads.find(name);
    check(git != grads.end(), "adam_step: no gradient entry for ", name);
    const Tensor& g = git->second;
    check(g.shape() == p.shape(), "adam_step: gradient shape mismatch for ", name);
    Tensor& m = st.m.find(name)->second;
    Tensor& v = st.v.find(name)->second;
    const double decay = decays(name) ? wd : 0.0;
    for (int64_t i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + decay * p[i]);
    }
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

EvalResult evaluate_split(const seg::SegNetParams& params, const pipe::ModelSpec& spec,
                          const std::string& dataset_root, const std::string& split,
                          const EvalOptions& opt) {
  const vos::DatasetMeta meta = vos::read_dataset_meta(dataset_root);
  const std::string split_dir = dataset_root + "/" + split;
  const std::vector<std::string> ids = vos::list_sequences(split_dir);
  check(!ids.empty(), "evaluate_split: no sequences under ", split_dir);
  if (opt.dump_masks) {
    check(!opt.dump_dir.empty(), "evaluate_split: dump_masks needs a directory");
    fs::create_directories(opt.dump_dir);
  }
  const auto is_seen = [&meta](const std::string& cls) {
    if (std::find(meta.seen.begin(), meta.seen.end(), cls) != meta.seen.end())
      return true;
    check(std::find(meta.unseen.begin(), meta.unseen.end(), cls) != meta.unseen.end(),
          "evaluate_split: class ", cls, " missing from dataset metadata");
    return false;
  };

  std::vector<std::vector<met::ObjectScore>> per_seq(ids.size());
#pragma omp parallel for schedule(dynamic)
  for (int64_t si = 0; si < static_cast<int64_t>(ids.size()); ++si) {
    const vos::LoadedSequence sq =
        vos::load_sequence(split_dir + "/" + ids[static_cast<size_t>(si)]);
    const std::vector<Tensor> preds =
        pipe::run_sequence(params, spec, sq.frames, sq.masks[0]);
    const int n = static_cast<int>(sq.frames.size());
    std::vector<met::ObjectScore> scores;
    for (int id = 1; id <= sq.M; ++id) {
      double J = 0, F = 0;
      for (int t = 1; t < n; ++t) {
        const Tensor pm = binarize(preds[static_cast<size_t>(t)], id);
        const Tensor gm = binarize(sq.masks[static_cast<size_t>(t)], id);
        J += met::jaccard(pm, gm);
        if (opt.compute_f) F += met::contour_f(pm, gm);
      }
      const std::string cls = sq.classes[static_cast<size_t>(id - 1)];
      scores.push_back({sq.id, id, cls, is_seen(cls), J / (n - 1),
                        opt.compute_f ? F / (n - 1) : 0.0});
    }
    if (opt.dump_masks) {
      const fs::path dir = fs::path(opt.dump_dir) / sq.id;
      fs::create_directories(dir);
      char name[32];
      for (int t = 0; t < n; ++t) {
        std::snprintf(name, sizeof name, "mask_%04d.pgm", t);
        write_pgm((dir / name).string(), preds[static_cast<size_t>(t)]);
      }
    }
    per_seq[static_cast<size_t>(si)] = std::move(scores);
  }

  EvalResult out;
  for (auto& s : per_seq)
    out.objects.insert(out.objects.end(), s.begin(), s.end());
  out.summary = met::summarize(out.objects);
  return out;
}

TrainResult train(const cfg::RunConfig& rc, bool verbose) {
  check(!rc.dataset.empty(), "train: config needs dataset=");
  check(!rc.out.empty(), "train: config needs out=");
  if (rc.jobs > 0) kernels::set_jobs(rc.jobs);
  fs::create_directories(rc.out);
  cfg::write_resolved(rc, rc.out + "/config.resolved");

  const std::string train_dir = rc.dataset + "/train";
  const std::vector<std::string> ids = vos::list_sequences(train_dir);
  check(!ids.empty(), "train: no sequences under ", train_dir);

  // Sequences are small; cache them on first touch.
  std::vector<std::optional<vos::LoadedSequence>> cache(ids.size());
  const auto seq_at = [&](size_t i) -> const vos::LoadedSequence& {
    if (!cache[i]) cache[i] = vos::load_sequence(train_dir + "/" + ids[i]);
    return *cache[i];
  };

  const pipe::ModelSpec spec = model_spec(rc);
  seg::SegNetParams params = seg::SegNetParams::init(spec.net);
  AdamState adam;
  for (const auto& [name, t] : params.tensors()) {
    adam.m.emplace(name, Tensor(t.shape()));
    adam.v.emplace(name, Tensor(t.shape()));
  }

  Rng rng(derive_seed(rc.seed, 0x5eedu));
  const std::string log_path = rc.out + "/training_log.csv";
  std::ofstream log(log_path, std::ios::binary);
  check(log.good(), "cannot open ", log_path, " for writing");
  log << "epoch,stage,mean_fine_loss,mean_coarse_loss,val_J_seen,val_J_unseen\n";

  TrainResult result;
  const int total_epochs = rc.stage1_epochs + rc.stage2_epochs;
  int epoch = 0;
  for (int stage = 1; stage <= 2; ++stage) {
    const int epochs = stage == 1 ? rc.stage1_epochs : rc.stage2_epochs;
    const int snip = stage == 1 ? rc.stage1_frames : rc.stage2_frames;
    const double lr0 = stage == 1 ? rc.lr : rc.stage2_lr;
    const double decay = stage == 1 ? rc.lr_decay : rc.stage2_lr_decay;
    const double wd = stage == 1 ? rc.weight_decay : rc.stage2_weight_decay;
    for (int e = 0; e < epochs; ++e, ++epoch) {
      const double lr = lr0 * std::pow(decay, e);

      // All sampling happens serially up front so the worker count cannot
      // change what is drawn.
      std::vector<size_t> order(ids.size());
      std::iota(order.begin(), order.end(), size_t{0});
      rng.shuffle(order);
      std::vector<int> offsets(order.size(), 0);
      for (size_t oi = 0; oi < order.size(); ++oi) {
        const vos::LoadedSequence& sq = seq_at(order[oi]);
        const int n = static_cast<int>(sq.frames.size());
        check(n >= snip, "train: sequence ", sq.id, " has ", n,
              " frames, need ", snip);
        int off = static_cast<int>(rng.uniform_int(0, n - snip));
        // A valid snippet must see every object in its first frame at
        // feature scale; frame 0 is guaranteed by the generator.
        const Tensor start = downsample_nearest(sq.masks[static_cast<size_t>(off)], 4);
        for (int id = 1; id <= sq.M && off > 0; ++id)
          if (!mask_has_id(start, id)) off = 0;
        offsets[oi] = off;
      }

      double fine_sum = 0, coarse_sum = 0;
      int snippets = 0;
      for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(rc.batch)) {
        const size_t count = std::min(order.size() - begin, static_cast<size_t>(rc.batch));
        for (size_t i = 0; i < count; ++i) seq_at(order[begin + i]);  // warm cache

        std::vector<std::map<std::string, Tensor>> grads(count);
        std::vector<pipe::LossReport> reports(count);
#pragma omp parallel for schedule(dynamic)
        for (int64_t bi = 0; bi < static_cast<int64_t>(count); ++bi) {
          const vos::LoadedSequence& sq = seq_at(order[begin + static_cast<size_t>(bi)]);
          const int off = offsets[begin + static_cast<size_t>(bi)];
          const std::vector<Tensor> fr(sq.frames.begin() + off,
                                       sq.frames.begin() + off + snip);
          const std::vector<Tensor> gt(sq.masks.begin() + off,
                                       sq.masks.begin() + off + snip);
          ag::Tape tape;
          const seg::TapedParams P = seg::lift(tape, params, true);
          const ag::Value loss =
              pipe::snippet_loss(tape, P, spec, fr, gt, &reports[static_cast<size_t>(bi)]);
          tape.backward(loss);
          auto& g = grads[static_cast<size_t>(bi)];
          for (const auto& [name, value] : P.values)
            g.emplace(name, value->grad_or_zeros());
        }

        // Combine in batch-index order; the merge is the only cross-snippet
        // reduction, so results do not depend on the worker count.
        std::map<std::string, Tensor> gsum = std::move(grads[0]);
        for (size_t i = 1; i < count; ++i)
          for (auto& [name, g] : gsum) {
            const Tensor& gi = grads[i].find(name)->second;
            for (int64_t k = 0; k < g.numel(); ++k) g[k] += gi[k];
          }
        const double inv = 1.0 / static_cast<double>(count);
        for (auto& [name, g] : gsum)
          for (int64_t k = 0; k < g.numel(); ++k) g[k] *= inv;
        adam_step(params, gsum, adam, lr, wd);

        for (size_t i = 0; i < count; ++i) {
          fine_sum += reports[i].fine;
          coarse_sum += reports[i].coarse;
        }
        snippets += static_cast<int>(count);
      }

      const double mean_fine = fine_sum / snippets;
      const double mean_coarse = coarse_sum / snippets;
      result.epoch_mean_loss.push_back(mean_fine + mean_coarse);

      const bool last_epoch = epoch == total_epochs - 1;
      const bool do_val =
          (rc.val_every > 0 && (epoch + 1) % rc.val_every == 0) || last_epoch;
      std::string vj_seen, vj_unseen;
      if (do_val) {
        EvalOptions vo;
        vo.compute_f = false;
        const EvalResult ev = evaluate_split(params, spec, rc.dataset, "val", vo);
        vj_seen = fmt(ev.summary.J_seen);
        vj_unseen = fmt(ev.summary.J_unseen);
      }
      log << epoch << "," << stage << "," << fmt(mean_fine) << "," << fmt(mean_coarse)
          << "," << vj_seen << "," << vj_unseen << "\n";
      log.flush();
      if (verbose) {
        std::printf("epoch %d stage %d lr %.3g fine %.4f coarse %.4f", epoch, stage, lr,
                    mean_fine, mean_coarse);
        if (do_val)
          std::printf(" val_J_seen %s val_J_unseen %s", vj_seen.c_str(),
                      vj_unseen.c_str());
        std::printf("\n");
        std::fflush(stdout);
      }
    }
  }
  check(log.good(), "write failed: ", log_path);

  result.checkpoint.spec = spec;
  result.checkpoint.params = params;
  result.checkpoint.adam_t = adam.t;
  result.checkpoint.adam_m = std::move(adam.m);
  result.checkpoint.adam_v = std::move(adam.v);
  result.checkpoint_path = rc.out + "/checkpoint.gam";
  result.log_path = log_path;
  pipe::save_checkpoint(result.checkpoint_path, result.checkpoint);
  return result;
}

std::vector<VariantResult> run_ablation(const cfg::RunConfig& base, bool verbose) {
  check(!base.out.empty(), "ablate: config needs out=");
  fs::create_directories(base.out);
  cfg::write_resolved(base, base.out + "/config.resolved");

  const std::string csv_path = base.out + "/ablation.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  check(csv.good(), "cannot open ", csv_path, " for writing");
  csv << "variant,G,J_seen,J_unseen,F_seen,F_unseen\n";

  std::vector<VariantResult> results;
  for (const std::string& name : cfg::ablation_names()) {
    cfg::RunConfig rc = base;
    cfg::set_ablation(rc, name);
    rc.out = base.out + "/" + name;
    if (verbose) {
      std::printf("=== variant %s ===\n", name.c_str());
      std::fflush(stdout);
    }
    const TrainResult tr = train(rc, verbose);
    const EvalResult ev =
        evaluate_split(tr.checkpoint.params, tr.checkpoint.spec, rc.dataset, "val", {});
    met::write_results_csv(rc.out + "/val_results.csv", ev.objects, ev.summary);
    csv << name << "," << fmt(ev.summary.G) << "," << fmt(ev.summary.J_seen) << ","
        << fmt(ev.summary.J_unseen) << "," << fmt(ev.summary.F_seen) << ","
        << fmt(ev.summary.F_unseen) << "\n";
    csv.flush();
    if (verbose) {
      std::printf("variant %s G %.4f J_seen %.4f J_unseen %.4f\n", name.c_str(),
                  ev.summary.G, ev.summary.J_seen, ev.summary.J_unseen);
      std::fflush(stdout);
    }
    results.push_back({name, ev.summary});
  }
  check(csv.good(), "write failed: ", csv_path);
  return results;
}

}  // namespace gam::train
