/*
 * Copyright 2026 The gplab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// gplab command-line front end. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gplab/alloc.hpp"
#include "gplab/cli/run_config.hpp"
#include "gplab/data/split.hpp"
#include "gplab/data/synthetic.hpp"
#include "gplab/eval/evaluate.hpp"
#include "gplab/log.hpp"
#include "gplab/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace gplab;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::uint64_t seed_or_env(const std::optional<std::uint64_t>& flag) {
  RunConfig c;
  c.seed = flag;
  return c.effective_seed();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

PatchDataset labeled_dataset(const std::string& root) {
  if (root.empty()) throw UsageError("--data is required");
  auto ds = ingest(root);
  if (ds.empty()) throw DataError("no images under " + root);
  if (!ds.labeled) throw DataError(root + " has no class directories; labels are required");
  return ds;
}

/// Picks records by split subset; with no split file every record is used.
std::vector<std::size_t> select(const PatchDataset& ds, const std::string& split_path,
                                const std::string& subset, std::optional<int> fold) {
  if (split_path.empty() || subset == "all") {
    if (subset != "all" && !split_path.empty()) throw UsageError("unknown --subset " + subset);
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  const SplitPlan plan = read_split_csv(split_path, ds);
  int f = 0;
  if (plan.kind == SplitPlan::Kind::kfold) {
    if (!fold) throw UsageError("--fold is required with a k-fold split");
    if (*fold < 0 || static_cast<std::size_t>(*fold) >= plan.k) {
      throw UsageError("--fold must be in 0.." + std::to_string(plan.k - 1));
    }
    f = *fold;
  }
  if (subset == "train") return plan.train_indices(f);
  if (subset == "val") return plan.val_indices(f);
  throw UsageError("--subset must be train, val or all");
}

ClassWeights weights_for(const PatchDataset& ds) {
  for (auto c : ds.class_counts) {
    if (c == 0) return ClassWeights::uniform();
  }
  return class_weights(ds.class_counts);
}

/// Runs inference, writes the predictions CSV and, for labeled data, the report.
void predict_and_report(Ensemble& ens, const std::string& data, const std::string& split,
                        const std::string& subset, std::optional<int> fold,
                        const fs::path& out_csv, std::optional<fs::path> report_dir,
                        std::size_t batch_size, bool verbose) {
  if (data.empty()) throw UsageError("--data is required");
  const PatchDataset ds = ingest(data);
  const auto idx = select(ds, split, subset, fold);
  if (idx.empty()) throw DataError("selected subset is empty");
  const auto store = ImageStore<float>::load(ds);
  const InferenceOptions opt{batch_size};
  const Prediction p = ensemble_predict(ens, store, idx, opt);

  if (!out_csv.empty()) {
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    std::vector<std::string> ids;
    for (auto i : idx) ids.push_back(ds.records[i].image_path);
    export_predictions(ids, p.labels, out_csv);
    log::info("wrote " + std::to_string(ids.size()) + " predictions to " + out_csv.string());
  }
  if (!ds.labeled) return;
  std::vector<int> truth;
  for (auto i : idx) truth.push_back(ds.records[i].class_index);
  const auto report = EvalReport::from(confusion(truth, p.labels),
                                       mean_loss(p.logits, truth, weights_for(ds)));
  fs::path dir = report_dir ? *report_dir : out_csv.parent_path();
  std::string stem = report_dir ? "" : out_csv.stem().string() + "_";
  if (!dir.empty()) fs::create_directories(dir);
  write_report(dir / (stem + "report.txt"), report, verbose);
  write_confusion_csv(dir / (stem + "confusion.csv"), report.confusion);
  log::info("samples=" + std::to_string(report.samples) + " macro_f1=" + fmt(report.macro_f1) +
            " mcc=" + fmt(report.mcc) + (verbose ? " micro_f1=" + fmt(report.micro_f1) +
                                                       " weighted_f1=" + fmt(report.weighted_f1)
                                                 : ""));
}

struct TrainFlags {
  std::string config, data, split, out, model, resume;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<int> fold;
  std::size_t jobs = 1;

  void add_to(CLI::App* cmd, bool with_fold) {
    cmd->add_option("--config", config, "key=value run configuration file");
    cmd->add_option("--data", data, "dataset root (class sub-directories)");
    cmd->add_option("--split", split, "split CSV from `gplab split`");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--model", model, "model name (toy-B0..toy-B4, B0..B4)");
    cmd->add_option("--epochs", epochs, "override epochs");
    cmd->add_option("--batch-size", batch_size, "override mini-batch size");
    cmd->add_option("--lr", lr, "override base learning rate");
    cmd->add_option("--seed", seed, "override seed (falls back to GPLAB_SEED)");
    if (with_fold) {
      cmd->add_option("--fold", fold, "validation fold of a k-fold split");
      cmd->add_option("--resume", resume, "continue from a checkpoint of the same configuration");
    } else {
      cmd->add_option("--jobs", jobs, "folds trained concurrently")->check(CLI::PositiveNumber);
    }
  }

  /// Config file first, flags on top.
  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : RunConfig::load(config);
    if (!data.empty()) c.data = data;
    if (!split.empty()) c.split = split;
    if (!out.empty()) c.out = out;
    if (!model.empty()) c.model = model;
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (lr) c.train.lr = *lr;
    if (seed) c.seed = seed;
    c.train.seed = c.effective_seed();
    if (c.data.empty()) throw UsageError("--data (or data= in the config) is required");
    if (c.split.empty()) throw UsageError("--split (or split= in the config) is required");
    if (c.out.empty()) throw UsageError("--out (or out= in the config) is required");
    c.train.validate();
    return c;
  }
};

/// Records the effective hyperparameters (paths omitted so runs compare cleanly).
void write_effective_config(const fs::path& dir, RunConfig c) {
  c.data.clear();
  c.split.clear();
  c.out.clear();
  c.seed = c.train.seed;
  fs::create_directories(dir);
  write_text(dir / "config.txt", c.render());
}

int cmd_train(const TrainFlags& flags) {
  const RunConfig c = flags.resolve();
  const ModelSpec spec = model_spec(c.model);
  const PatchDataset ds = labeled_dataset(c.data);
  const SplitPlan plan = read_split_csv(c.split, ds);
  TrainConfig cfg = c.train;
  int f = 0;
  if (plan.kind == SplitPlan::Kind::kfold) {
    if (!flags.fold) throw UsageError("--fold is required with a k-fold split (or use `gplab cv`)");
    if (*flags.fold < 0 || static_cast<std::size_t>(*flags.fold) >= plan.k) {
      throw UsageError("--fold must be in 0.." + std::to_string(plan.k - 1));
    }
    f = *flags.fold;
    cfg.seed = fold_seed(cfg.seed, static_cast<std::size_t>(f));
  } else if (flags.fold) {
    throw UsageError("--fold only applies to k-fold splits");
  }
  const auto store = ImageStore<float>::load(ds);
  const auto labels = ds.labels();
  const auto tr = plan.train_indices(f);
  const auto va = plan.val_indices(f);
  log::info("training " + spec.name + " on " + std::to_string(tr.size()) + " images, validating on " +
            std::to_string(va.size()));
  write_effective_config(c.out, c);
  TrainOptions opt;
  opt.out_dir = fs::path(c.out);
  if (!flags.resume.empty()) opt.resume_from = fs::path(flags.resume);
  const auto run = train(spec, store, labels, tr, va, cfg, opt);
  log::info("final train_f1=" + fmt(run.logs.back().train_f1) +
            " val_f1=" + fmt(run.logs.back().val_f1));
  return kOk;
}

int cmd_cv(const TrainFlags& flags) {
  const RunConfig c = flags.resolve();
  const ModelSpec spec = model_spec(c.model);
  const PatchDataset ds = labeled_dataset(c.data);
  const SplitPlan plan = read_split_csv(c.split, ds);
  if (plan.kind != SplitPlan::Kind::kfold) throw UsageError("`gplab cv` needs a k-fold split");
  const auto store = ImageStore<float>::load(ds);
  const auto labels = ds.labels();
  write_effective_config(c.out, c);
  const auto runs = train_cv(spec, store, labels, plan, c.train, fs::path(c.out), flags.jobs);
  std::string summary = "fold,val_f1,checkpoint\n";
  for (std::size_t f = 0; f < runs.size(); ++f) {
    char line[160];
    std::snprintf(line, sizeof line, "%zu,%.9g,fold_%zu/checkpoints/%s\n", f,
                  runs[f].logs.back().val_f1, f, checkpoint_name(c.train.epochs).c_str());
    summary += line;
  }
  write_text(fs::path(c.out) / "cv_summary.csv", summary);
  log::info("cross-validation finished; summary in " + (fs::path(c.out) / "cv_summary.csv").string());
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"gplab: histology patch classification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "only warnings and errors on stderr");
  app.add_flag("-v,--verbose", verbose, "debug logging and extra metrics");

  // generate
  auto* gen = app.add_subcommand("generate", "write the synthetic patch dataset");
  std::string gen_out;
  std::size_t gen_total = 600, gen_size = 64;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "output root")->required();
  gen->add_option("--total", gen_total, "number of images");
  gen->add_option("--size", gen_size, "image side in pixels");
  gen->add_option("--seed", gen_seed, "seed (falls back to GPLAB_SEED)");

  // split
  auto* spl = app.add_subcommand("split", "write a stratified holdout or k-fold split CSV");
  std::string spl_data, spl_mode = "holdout", spl_out;
  double spl_ratio = 0.8;
  std::size_t spl_k = 5;
  std::optional<std::uint64_t> spl_seed;
  spl->add_option("--data", spl_data, "dataset root")->required();
  spl->add_option("--mode", spl_mode, "holdout or kfold")
      ->check(CLI::IsMember({"holdout", "kfold"}));
  spl->add_option("--ratio", spl_ratio, "holdout training fraction");
  spl->add_option("--k", spl_k, "number of folds");
  spl->add_option("--seed", spl_seed, "seed (falls back to GPLAB_SEED)");
  spl->add_option("--out", spl_out, "split CSV path")->required();

  // train / cv
  TrainFlags train_flags, cv_flags;
  auto* trn = app.add_subcommand("train", "train one model on a holdout split or one fold");
  train_flags.add_to(trn, true);
  auto* cv = app.add_subcommand("cv", "train every fold of a k-fold split");
  cv_flags.add_to(cv, false);

  // ensemble / predict
  std::vector<std::string> ens_ckpts;
  std::string inf_data, inf_csv, inf_split, inf_subset = "all", inf_report;
  std::optional<int> inf_fold;
  std::size_t inf_batch = 16;
  auto add_inference = [&](CLI::App* cmd) {
    cmd->add_option("--data", inf_data, "image root (class dirs or a flat folder)")->required();
    cmd->add_option("--out-csv", inf_csv, "predictions CSV")->required();
    cmd->add_option("--split", inf_split, "split CSV restricting the images");
    cmd->add_option("--subset", inf_subset, "train, val or all")
        ->check(CLI::IsMember({"train", "val", "all"}));
    cmd->add_option("--fold", inf_fold, "fold for k-fold subsets");
    cmd->add_option("--report-dir", inf_report, "where report files go (default: next to CSV)");
    cmd->add_option("--batch-size", inf_batch, "inference mini-batch size")
        ->check(CLI::PositiveNumber);
  };
  auto* ens = app.add_subcommand("ensemble", "average the logits of several checkpoints");
  ens->add_option("--checkpoints", ens_ckpts, "member checkpoints")->required();
  add_inference(ens);
  std::string pred_ckpt;
  auto* prd = app.add_subcommand("predict", "predict with one checkpoint");
  prd->add_option("--checkpoint", pred_ckpt, "checkpoint")->required();
  add_inference(prd);

  // evaluate
  std::string ev_ckpt, ev_data, ev_split, ev_subset = "val", ev_out = ".";
  std::vector<std::string> ev_members;
  std::optional<int> ev_fold;
  std::size_t ev_batch = 16;
  auto* evl = app.add_subcommand("evaluate", "score a checkpoint or ensemble on a labeled subset");
  auto* ev_single = evl->add_option("--checkpoint", ev_ckpt, "single checkpoint");
  auto* ev_multi = evl->add_option("--ensemble", ev_members, "ensemble member checkpoints");
  ev_single->excludes(ev_multi);
  evl->add_option("--data", ev_data, "dataset root")->required();
  evl->add_option("--split", ev_split, "split CSV");
  evl->add_option("--subset", ev_subset, "train, val or all")
      ->check(CLI::IsMember({"train", "val", "all"}));
  evl->add_option("--fold", ev_fold, "fold for k-fold subsets");
  evl->add_option("--out", ev_out, "directory for report.txt and confusion.csv");
  evl->add_option("--batch-size", ev_batch, "inference mini-batch size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  if (quiet) log::set_level(log::Level::warn);
  if (verbose) log::set_level(log::Level::debug);

  try {
    if (gen->parsed()) {
      SyntheticSpec s;
      s.total = gen_total;
      s.image_size = gen_size;
      s.seed = seed_or_env(gen_seed);
      const auto counts = generate_synthetic(gen_out, s);
      std::string msg = "generated";
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        msg += " " + class_name(static_cast<int>(c)) + "=" + std::to_string(counts[c]);
      }
      log::info(msg + " under " + gen_out);
      return kOk;
    }
    if (spl->parsed()) {
      const auto ds = labeled_dataset(spl_data);
      const std::uint64_t seed = seed_or_env(spl_seed);
      SplitPlan plan;
      if (spl_mode == "holdout") {
        if (!(spl_ratio > 0.0 && spl_ratio < 1.0)) throw UsageError("--ratio must be in (0, 1)");
        plan = split_holdout(ds, HoldoutOptions{spl_ratio, seed});
      } else {
        plan = split_kfold(ds, spl_k, seed);
      }
      write_split_csv(spl_out, ds, plan);
      log::info("wrote " + spl_mode + " split of " + std::to_string(ds.size()) + " records to " +
                spl_out);
      return kOk;
    }
    if (trn->parsed()) return cmd_train(train_flags);
    if (cv->parsed()) return cmd_cv(cv_flags);
    if (ens->parsed() || prd->parsed()) {
      std::vector<fs::path> paths;
      if (prd->parsed()) paths.emplace_back(pred_ckpt);
      for (const auto& p : ens_ckpts) paths.emplace_back(p);
      Ensemble e = Ensemble::load(paths);
      std::optional<fs::path> rep;
      if (!inf_report.empty()) rep = fs::path(inf_report);
      predict_and_report(e, inf_data, inf_split, inf_subset, inf_fold, inf_csv, rep, inf_batch,
                         verbose);
      return kOk;
    }
    if (evl->parsed()) {
      std::vector<fs::path> paths;
      if (!ev_ckpt.empty()) paths.emplace_back(ev_ckpt);
      for (const auto& p : ev_members) paths.emplace_back(p);
      if (paths.empty()) throw UsageError("evaluate needs --checkpoint or --ensemble");
      const PatchDataset ds = labeled_dataset(ev_data);
      if (ev_split.empty() && ev_subset != "all") {
        throw UsageError("--subset " + ev_subset + " needs --split");
      }
      Ensemble e = Ensemble::load(paths);
      predict_and_report(e, ev_data, ev_split, ev_subset, ev_fold, {}, fs::path(ev_out), ev_batch,
                         verbose);
      return kOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
