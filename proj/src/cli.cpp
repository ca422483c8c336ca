// SPDX-License-Identifier: Apache-2.0
#include "gam/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gam/config.hpp"
#include "gam/error.hpp"
#include "gam/kernels.hpp"
#include "gam/pipeline.hpp"
#include "gam/rng.hpp"
#include "gam/synthvos.hpp"
#include "gam/trainer.hpp"

namespace fs = std::filesystem;

namespace gam::cli {

namespace {

// key=value and --key value overrides on top of an optional config file.
struct ConfigArgs {
  std::string config_path;
  std::string ablation;
  std::map<std::string, std::string> overrides;
  CLI::App* cmd = nullptr;

  void attach(CLI::App* sub) {
    cmd = sub;
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--ablation", ablation,
                    "ablation variant (full, no_appearance, no_maskprop, unimodal, "
                    "no_update, appearance_softmax, no_end_to_end)");
    for (const std::string& key : cfg::config_keys())
      sub->add_option("--" + key, overrides[key], "override config key " + key);
  }

  cfg::RunConfig resolve() const {
    cfg::RunConfig rc;
    if (!config_path.empty()) rc = cfg::parse_run_config(config_path);
    if (!ablation.empty()) cfg::set_ablation(rc, ablation);
    for (const std::string& key : cfg::config_keys())
      if (cmd->count("--" + key) > 0)
        cfg::apply_key(rc, "override --" + key, key, overrides.at(key), 0);
    return rc;
  }
};

int cmd_gradcheck(int trials, double tol, uint64_t seed, bool inject_fault) {
  if (inject_fault) ag::set_fault_injection(true);
  std::vector<ag::SuiteCaseResult> rows = ag::run_op_suite(trials, tol, seed);

  // Composite chains: appearance fit -> scores, and a tiny full forward
  // through the snippet loss. Coordinates are sampled; ops sweep all.
  const auto chain = [&](const char* tag, auto&& make) {
    ag::SuiteCaseResult r;
    r.name = tag;
    r.pass = true;
    for (int t = 0; t < trials; ++t) {
      const ag::GradCheckProblem p = make(derive_seed(seed, 1000 + static_cast<uint64_t>(t)));
      const ag::GradCheckReport rep = ag::grad_check(p, 1e-5, 20, derive_seed(seed, 7));
      r.max_rel_err = std::max(r.max_rel_err, rep.max_rel_err);
      r.pass = r.pass && rep.pass(tol);
    }
    rows.push_back(r);
  };
  chain("chain.appearance_scores", pipe::appearance_chain_problem);
  chain("chain.frame_forward_loss", pipe::frame_forward_problem);

  int failed = 0;
  for (const auto& r : rows) {
    std::printf("%-28s max_rel_err %.3e  %s\n", r.name.c_str(), r.max_rel_err,
                r.pass ? "PASS" : "FAIL");
    if (!r.pass) ++failed;
  }
  std::printf("gradcheck: %zu/%zu paths passed (tol %.1e, %d trials)\n",
              rows.size() - static_cast<size_t>(failed), rows.size(), tol, trials);
  return failed == 0 ? 0 : 1;
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Video object segmentation with a generative appearance model"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "worker threads (also env GAMSEG_JOBS)");

  auto* synth = app.add_subcommand("synth", "build a synthetic dataset");
  std::string synth_spec, synth_out;
  synth->add_option("spec", synth_spec, "dataset spec file")->required();
  synth->add_option("out", synth_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model");
  ConfigArgs train_args;
  train_args.attach(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_dataset, ev_split = "val", ev_out;
  bool ev_dump = false;
  eval->add_option("--checkpoint", ev_ckpt, "checkpoint bundle")->required();
  eval->add_option("--dataset", ev_dataset, "dataset root")->required();
  eval->add_option("--split", ev_split, "train or val (default val)");
  eval->add_option("--out", ev_out, "output directory")->required();
  eval->add_flag("--dump-masks", ev_dump, "write predicted index masks as PGM");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate every variant");
  ConfigArgs ablate_args;
  ablate_args.attach(ablate);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  int gc_trials = 10;
  double gc_tol = 1e-4;
  uint64_t gc_seed = 1;
  bool gc_fault = false;
  gc->add_option("--trials", gc_trials, "random instances per path (default 10)");
  gc->add_option("--tol", gc_tol, "max relative error (default 1e-4)");
  gc->add_option("--seed", gc_seed, "base seed");
  gc->add_flag("--inject-fault", gc_fault,
               "negative control: corrupt one backward rule and expect FAIL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // prints the message or requested help text
    return rc == 0 ? 0 : 2;
  }
  if (jobs > 0) kernels::set_jobs(jobs);

  if (*synth) {
    const vos::DatasetParams p = vos::parse_dataset_params(synth_spec);
    vos::build_dataset(p, synth_out);
    std::printf("wrote %d train + %d val sequences under %s\n", p.train_sequences,
                p.val_sequences, synth_out.c_str());
    return 0;
  }
  if (*train) {
    const cfg::RunConfig rc = train_args.resolve();
    const train::TrainResult r = train::train(rc, true);
    std::printf("checkpoint: %s\nlog: %s\n", r.checkpoint_path.c_str(),
                r.log_path.c_str());
    return 0;
  }
  if (*eval) {
    if (!fs::exists(ev_ckpt)) throw config_error("checkpoint not found: " + ev_ckpt);
    const pipe::Checkpoint ckpt = pipe::load_checkpoint(ev_ckpt);
    train::EvalOptions opt;
    opt.dump_masks = ev_dump;
    opt.dump_dir = ev_out + "/masks";
    fs::create_directories(ev_out);
    {
      std::ofstream os(ev_out + "/eval.resolved", std::ios::binary);
      check(os.good(), "cannot open ", ev_out + "/eval.resolved", " for writing");
      os << "checkpoint=" << ev_ckpt << "\ndataset=" << ev_dataset << "\nsplit="
         << ev_split << "\ndump_masks=" << (ev_dump ? 1 : 0) << "\n";
    }
    const train::EvalResult r =
        train::evaluate_split(ckpt.params, ckpt.spec, ev_dataset, ev_split, opt);
    const std::string csv = ev_out + "/results.csv";
    met::write_results_csv(csv, r.objects, r.summary);
    std::printf("J_seen %.4f J_unseen %.4f F_seen %.4f F_unseen %.4f G %.4f\n",
                r.summary.J_seen, r.summary.J_unseen, r.summary.F_seen,
                r.summary.F_unseen, r.summary.G);
    std::printf("results: %s\n", csv.c_str());
    return 0;
  }
  if (*ablate) {
    const cfg::RunConfig rc = ablate_args.resolve();
    train::run_ablation(rc, true);
    std::printf("table: %s/ablation.csv\n", rc.out.c_str());
    return 0;
  }
  if (*gc) return cmd_gradcheck(gc_trials, gc_tol, gc_seed, gc_fault);
  fail("unreachable: no subcommand dispatched");
}

}  // namespace

int run(int argc, const char* const* argv) {
  try {
    return dispatch(argc, argv);
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace gam::cli
