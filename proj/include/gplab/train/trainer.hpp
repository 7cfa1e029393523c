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

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gplab/data/augment.hpp"
#include "gplab/data/batch.hpp"
#include "gplab/data/dataset.hpp"
#include "gplab/data/normalize.hpp"
#include "gplab/data/split.hpp"
#include "gplab/eval/evaluate.hpp"
#include "gplab/eval/metrics.hpp"
#include "gplab/log.hpp"
#include "gplab/model/network.hpp"
#include "gplab/train/adam.hpp"
#include "gplab/train/checkpoint.hpp"
#include "gplab/train/loss.hpp"
#include "gplab/train/schedule.hpp"

namespace gplab {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 60;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  SchedulerSpec scheduler{};
  std::uint64_t seed = 0;
  std::vector<std::size_t> checkpoint_epochs{20, 25, 30, 35};
  AugmentationSpec augmentation{};
  NormalizationSpec normalization{};

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("lr must be positive");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (!(weight_decay >= 0.0)) throw UsageError("weight decay must be >= 0");
    scheduler.validate();
    augmentation.validate();
    if (!(normalization.epsilon > 0.0)) throw UsageError("normalization epsilon must be positive");
  }

  /// Canonical text of every hyperparameter; paths and output locations excluded.
  std::string canonical() const {
    std::ostringstream s;
    s.precision(17);
    s << "batch_size=" << batch_size << ";epochs=" << epochs << ";lr=" << lr
      << ";weight_decay=" << weight_decay << ";scheduler=" << to_string(scheduler.kind)
      << ";gamma=" << scheduler.gamma << ";step_period=" << scheduler.step_period << ";milestones=";
    for (auto m : scheduler.milestones) s << m << ',';
    s << ";seed=" << seed << ";rotation=" << augmentation.max_rotation_degrees
      << ";hflip=" << augmentation.horizontal_flip_prob
      << ";vflip=" << augmentation.vertical_flip_prob
      << ";brightness=" << augmentation.brightness_delta
      << ";contrast=" << augmentation.contrast_delta << ";aug_seed=" << augmentation.rng_seed
      << ";norm_eps=" << normalization.epsilon;
    return s.str();
  }
};

inline std::uint64_t config_digest(const TrainConfig& cfg, const std::string& spec_name) {
  return fnv1a64(spec_name + "|" + cfg.canonical());
}

/// splitmix64-style combination of two seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Seed used for fold f of a cross-validation run.
inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  return derive_seed(seed, 1000 + fold);
}

inline std::mt19937_64 augmentation_rng(const TrainConfig& cfg, std::size_t epoch) {
  return epoch_rng(derive_seed(cfg.seed, cfg.augmentation.rng_seed), epoch, 1);
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_f1 = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  ConfusionMatrix train_confusion{};
  ConfusionMatrix val_confusion{};
};

inline constexpr const char* kEpochLogHeader = "epoch,lr,train_loss,train_f1,val_loss,val_f1";

inline std::string epoch_log_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.10g,%.9g,%.9g,%.9g,%.9g", e.epoch, e.lr, e.train_loss,
                e.train_f1, e.val_loss, e.val_f1);
  return buf;
}

struct TrainOptions {
  /// Where the epoch log, confusion matrices and checkpoints go; none = in memory only.
  std::optional<std::filesystem::path> out_dir{};
  /// Continue from a checkpoint written by an identical configuration.
  std::optional<std::filesystem::path> resume_from{};
  std::function<void(const EpochLog&)> on_epoch{};
  std::string tag{};  // prefix for log lines, e.g. "fold 2"
};

struct TrainRun {
  Network<float> model;
  std::vector<EpochLog> logs;
  std::vector<std::filesystem::path> checkpoints;
};

inline std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.gplb", epoch);
  return buf;
}

namespace detail {
inline std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}
} // namespace detail

/**
 * Mini-batch training with weighted cross-entropy and Adam. Per epoch: a
 * seeded shuffle, per-image augmentation, per-batch normalization, one
 * optimizer step per batch, then eval-mode validation. The learning rate is
 * fixed within an epoch. Checkpoints are written at the configured epochs
 * (1-based) and after the last one.
 */
inline TrainRun train(const ModelSpec& spec, const ImageStore<float>& store,
                      std::span<const int> labels, std::span<const std::size_t> train_idx,
                      std::span<const std::size_t> val_idx, const TrainConfig& cfg,
                      const TrainOptions& opt = {}) {
  cfg.validate();
  if (train_idx.empty()) throw DataError("training subset is empty");
  std::array<std::size_t, kNumClasses> counts{};
  for (auto i : train_idx) {
    if (labels[i] < 0) throw DataError("training images must be labeled");
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  const ClassWeights weights = class_weights(counts);
  const std::uint64_t digest = config_digest(cfg, spec.name);
  const std::string tag = opt.tag.empty() ? "" : opt.tag + ": ";

  TrainRun run{build<float>(spec, cfg.seed), {}, {}};
  Network<float>& net = run.model;
  std::vector<Tensor<float>> params;
  std::vector<std::string> names;
  for (const auto& e : net.parameters()) {
    params.push_back(e.tensor);
    names.push_back(e.name);
  }
  Adam<float> adam(params, AdamOptions{0.9, 0.999, 1e-8, cfg.weight_decay});

  std::size_t start = 0;
  if (opt.resume_from) {
    const Checkpoint ck = load_checkpoint(*opt.resume_from);
    if (ck.config_digest != digest || ck.spec_name != spec.name) {
      throw CheckpointError(CheckpointError::Kind::incompatible,
                            opt.resume_from->string() + " was written by a different configuration");
    }
    restore(ck, net, &adam);
    start = static_cast<std::size_t>(ck.epoch);
    log::info(tag + "resuming after epoch " + std::to_string(start));
  }

  std::ofstream csv;
  std::filesystem::path ck_dir, cm_dir;
  if (opt.out_dir) {
    ck_dir = *opt.out_dir / "checkpoints";
    cm_dir = *opt.out_dir / "confusion";
    std::error_code ec;
    std::filesystem::create_directories(ck_dir, ec);
    std::filesystem::create_directories(cm_dir, ec);
    if (ec) throw DataError("cannot create output directory " + opt.out_dir->string());
    const auto log_path = *opt.out_dir / "epoch_log.csv";
    const bool append = start > 0 && std::filesystem::exists(log_path);
    csv.open(log_path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!csv) throw DataError("cannot write " + log_path.string());
    if (!append) csv << kEpochLogHeader << '\n' << std::flush;
  }

  const InferenceOptions infer{cfg.batch_size, cfg.normalization};
  const std::vector<std::size_t> train_vec(train_idx.begin(), train_idx.end());
  for (std::size_t epoch = start; epoch < cfg.epochs; ++epoch) {
    EpochLog rec;
    rec.epoch = epoch + 1;
    rec.lr = lr_at(cfg.scheduler, cfg.lr, epoch);
    auto aug_rng = augmentation_rng(cfg, epoch);

    double loss_sum = 0.0;
    std::size_t seen = 0, batch_no = 0;
    for (const auto& b : batches(train_vec, cfg.batch_size, cfg.seed, epoch)) {
      ++batch_no;
      std::vector<Tensor<float>> imgs;
      std::vector<int> ys;
      imgs.reserve(b.size());
      for (auto i : b) {
        imgs.push_back(augment(store.images.at(i), cfg.augmentation, aug_rng));
        ys.push_back(labels[i]);
      }
      const Tensor<float> x = normalize_batch(stack_images(imgs), cfg.normalization);

      Tape<float> tape;
      net.zero_grad();
      const Tensor<float> logits = net.forward(tape, x, Mode::train);
      const Tensor<float> loss = ops::weighted_cross_entropy(tape, logits, ys, weights);
      const float l = loss.item();
      if (!std::isfinite(l)) {
        throw NumericError(tag + "non-finite loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batch_no));
      }
      tape.backward(loss);
      adam.step(rec.lr, &names);

      loss_sum += static_cast<double>(l) * static_cast<double>(b.size());
      seen += b.size();
      const auto pred = argmax_rows(logits);
      for (std::size_t j = 0; j < ys.size(); ++j) rec.train_confusion.add(ys[j], pred[j]);
    }
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_f1 = macro_f1(rec.train_confusion);

    if (!val_idx.empty()) {
      const EvalReport val = evaluate(logits_of(net), store, labels, val_idx, weights, infer);
      rec.val_loss = val.mean_loss;
      rec.val_f1 = val.macro_f1;
      rec.val_confusion = val.confusion;
    } else {
      rec.val_loss = rec.val_f1 = std::nan("");
    }

    log::info(tag + "epoch " + std::to_string(rec.epoch) + "/" + std::to_string(cfg.epochs) +
              " " + epoch_log_row(rec));
    if (opt.out_dir) {
      csv << epoch_log_row(rec) << '\n' << std::flush;
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.csv", rec.epoch);
      write_confusion_csv(cm_dir / name, val_idx.empty() ? rec.train_confusion : rec.val_confusion);
      const bool wanted = rec.epoch == cfg.epochs ||
                          std::find(cfg.checkpoint_epochs.begin(), cfg.checkpoint_epochs.end(),
                                    rec.epoch) != cfg.checkpoint_epochs.end();
      if (wanted) {
        const auto path = ck_dir / checkpoint_name(rec.epoch);
        save_checkpoint(path, capture(net, &adam, rec.epoch, digest,
                                      detail::rng_text(augmentation_rng(cfg, epoch + 1))));
        run.checkpoints.push_back(path);
      }
    }
    if (opt.on_epoch) opt.on_epoch(rec);
    run.logs.push_back(std::move(rec));
  }
  return run;
}

/**
 * k-fold cross-validation: fold f trains on every other fold and validates
 * on f, with its own derived seed, into out_dir/fold_f. Folds share nothing
 * mutable, so `jobs` > 1 runs them concurrently with identical results.
 */
inline std::vector<TrainRun> train_cv(const ModelSpec& spec, const ImageStore<float>& store,
                                      std::span<const int> labels, const SplitPlan& plan,
                                      const TrainConfig& cfg,
                                      const std::optional<std::filesystem::path>& out_dir = {},
                                      std::size_t jobs = 1) {
  if (plan.kind != SplitPlan::Kind::kfold) throw UsageError("cross-validation needs a k-fold split");
  std::vector<std::optional<TrainRun>> runs(plan.k);
  std::vector<std::exception_ptr> errors(plan.k);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f; (f = next.fetch_add(1)) < plan.k;) {
      try {
        TrainConfig fc = cfg;
        fc.seed = fold_seed(cfg.seed, f);
        TrainOptions o;
        o.tag = "fold " + std::to_string(f);
        if (out_dir) o.out_dir = *out_dir / ("fold_" + std::to_string(f));
        const auto tr = plan.train_indices(static_cast<int>(f));
        const auto va = plan.val_indices(static_cast<int>(f));
        runs[f] = train(spec, store, labels, tr, va, fc, o);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(jobs, 1, plan.k);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<TrainRun> out;
  for (auto& r : runs) out.push_back(std::move(*r));
  return out;
}

} // namespace gplab
