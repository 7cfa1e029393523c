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

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gplab/data/batch.hpp"
#include "gplab/data/dataset.hpp"
#include "gplab/data/normalize.hpp"
#include "gplab/eval/metrics.hpp"
#include "gplab/model/network.hpp"
#include "gplab/ops.hpp"
#include "gplab/train/checkpoint.hpp"
#include "gplab/train/loss.hpp"

namespace gplab {

/// Maps a normalized [N,3,H,W] batch to [N,6] logits.
using LogitFn = std::function<Tensor<float>(const Tensor<float>&)>;

struct InferenceOptions {
  std::size_t batch_size = 16;
  NormalizationSpec normalization{};
  /// Seed of the fixed permutation that assigns images to inference batches.
  std::uint64_t batch_seed = 0;
};

inline LogitFn logits_of(Network<float>& net) {
  return [&net](const Tensor<float>& x) { return net.predict_logits(x); };
}

/**
 * Logits for `subset`, returned in subset order. Each mini-batch is
 * normalized on its own, exactly as in training, so batch membership matters:
 * images are dealt into batches through a fixed seeded permutation. Subsets
 * are usually grouped by class, and class-pure batches would shift the
 * per-batch statistics away from the mixed batches seen in training.
 */
inline Tensor<float> infer_logits(const LogitFn& fn, const ImageStore<float>& store,
                                  std::span<const std::size_t> subset,
                                  const InferenceOptions& opt = {}) {
  std::vector<std::size_t> pos(subset.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  Tensor<float> out(Shape{subset.size(), kNumClasses});
  for (const auto& b : batches(pos, opt.batch_size, opt.batch_seed, 0, true)) {
    std::vector<Tensor<float>> imgs;
    imgs.reserve(b.size());
    for (auto p : b) imgs.push_back(store.images.at(subset[p]));
    const Tensor<float> logits = fn(normalize_batch(stack_images(imgs), opt.normalization));
    if (logits.rank() != 2 || logits.dim(0) != b.size() || logits.dim(1) != kNumClasses) {
      throw ShapeError("model produced logits of shape " + shape_str(logits.shape()));
    }
    for (std::size_t r = 0; r < b.size(); ++r) {
      std::copy_n(logits.data().begin() + static_cast<std::ptrdiff_t>(r * kNumClasses), kNumClasses,
                  out.data().begin() + static_cast<std::ptrdiff_t>(b[r] * kNumClasses));
    }
  }
  return out;
}

/// Members sharing one parameter registry; combined by averaging logits.
class Ensemble {
public:
  explicit Ensemble(std::vector<Network<float>> members) : members_(std::move(members)) {
    if (members_.empty()) throw UsageError("an ensemble needs at least one member");
    const auto& ref = members_.front();
    for (std::size_t m = 1; m < members_.size(); ++m) {
      const auto& p = members_[m].parameters();
      bool same = p.size() == ref.parameters().size();
      for (std::size_t i = 0; same && i < p.size(); ++i) {
        same = p[i].name == ref.parameters()[i].name &&
               p[i].tensor.shape() == ref.parameters()[i].tensor.shape();
      }
      if (!same) {
        throw CheckpointError(CheckpointError::Kind::incompatible,
                              "ensemble member " + std::to_string(m) + " ('" +
                                  members_[m].spec().name + "') does not match member 0 ('" +
                                  ref.spec().name + "')");
      }
    }
  }

  static Ensemble load(const std::vector<std::filesystem::path>& paths) {
    std::vector<Network<float>> nets;
    for (const auto& p : paths) nets.push_back(load_network(p));
    return Ensemble(std::move(nets));
  }

  std::size_t size() const noexcept { return members_.size(); }
  Network<float>& member(std::size_t i) { return members_.at(i); }

  /// Mean of member logits, accumulated in double in member order.
  Tensor<float> logits(const Tensor<float>& batch) {
    std::vector<double> acc;
    Shape shape;
    for (auto& net : members_) {
      const Tensor<float> l = net.predict_logits(batch);
      if (acc.empty()) {
        acc.assign(l.numel(), 0.0);
        shape = l.shape();
      }
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += l[i];
    }
    Tensor<float> out(shape);
    const double m = static_cast<double>(members_.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / m);
    return out;
  }

  LogitFn fn() {
    return [this](const Tensor<float>& x) { return logits(x); };
  }

private:
  std::vector<Network<float>> members_;
};

struct Prediction {
  Tensor<float> logits;
  Tensor<float> probabilities;
  std::vector<int> labels;
};

/// Softmax of the (ensemble) logits and lowest-index argmax.
inline Prediction predict(const LogitFn& fn, const ImageStore<float>& store,
                          std::span<const std::size_t> subset, const InferenceOptions& opt = {}) {
  Prediction p;
  p.logits = infer_logits(fn, store, subset, opt);
  p.probabilities = ops::softmax(p.logits);
  p.labels = argmax_rows(p.logits);
  return p;
}

inline Prediction ensemble_predict(Ensemble& ens, const ImageStore<float>& store,
                                   std::span<const std::size_t> subset,
                                   const InferenceOptions& opt = {}) {
  return predict(ens.fn(), store, subset, opt);
}

struct EvalReport {
  ConfusionMatrix confusion{};
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  double mcc = 0.0;
  double mean_loss = 0.0;
  double micro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::size_t samples = 0;

  static EvalReport from(const ConfusionMatrix& cm, double mean_loss) {
    EvalReport r;
    r.confusion = cm;
    r.per_class_f1 = gplab::per_class_f1(cm);
    r.macro_f1 = gplab::macro_f1(cm);
    r.mcc = gplab::mcc(cm);
    r.micro_f1 = gplab::micro_f1(cm);
    r.weighted_f1 = gplab::weighted_f1(cm);
    r.mean_loss = mean_loss;
    r.samples = cm.total();
    return r;
  }
};

/// Mean weighted cross-entropy of precomputed logits (per-sample average).
inline double mean_loss(const Tensor<float>& logits, std::span<const int> labels,
                        const ClassWeights& weights) {
  Tape<double> tape(false);
  return ops::weighted_cross_entropy(tape, logits.cast<double>(), labels, weights).item();
}

/**
 * Deterministic evaluation of `subset`: no augmentation, per-batch
 * normalization, weighted loss and the full metric set.
 */
inline EvalReport evaluate(const LogitFn& fn, const ImageStore<float>& store,
                           std::span<const int> labels, std::span<const std::size_t> subset,
                           const ClassWeights& weights, const InferenceOptions& opt = {}) {
  if (subset.empty()) throw DataError("cannot evaluate an empty subset");
  std::vector<int> truth;
  truth.reserve(subset.size());
  for (auto i : subset) {
    if (labels[i] < 0) throw DataError("cannot evaluate unlabeled images");
    truth.push_back(labels[i]);
  }
  const Tensor<float> logits = infer_logits(fn, store, subset, opt);
  const auto pred = argmax_rows(logits);
  return EvalReport::from(confusion(truth, pred), mean_loss(logits, truth, weights));
}

/// key=value report; micro and weighted F1 only when verbose.
inline void write_report(const std::filesystem::path& path, const EvalReport& r, bool verbose = false) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.precision(17);
  f << "samples=" << r.samples << '\n';
  f << "macro_f1=" << r.macro_f1 << '\n';
  f << "mcc=" << r.mcc << '\n';
  f << "mean_loss=" << r.mean_loss << '\n';
  for (std::size_t c = 0; c < r.per_class_f1.size(); ++c) {
    f << "f1_" << class_name(static_cast<int>(c)) << '=' << r.per_class_f1[c] << '\n';
  }
  if (verbose) {
    f << "micro_f1=" << r.micro_f1 << '\n';
    f << "weighted_f1=" << r.weighted_f1 << '\n';
  }
  if (!f) throw DataError("failed writing " + path.string());
}

inline std::map<std::string, double> read_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  std::map<std::string, double> out;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed report line '" + line + "'");
    out[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  return out;
}

inline void export_predictions(std::span<const std::string> ids, std::span<const int> labels,
                               const std::filesystem::path& path) {
  if (ids.size() != labels.size()) {
    throw UsageError("export_predictions: " + std::to_string(ids.size()) + " ids vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << "image,prediction\n";
  for (std::size_t i = 0; i < ids.size(); ++i) f << ids[i] << ',' << class_name(labels[i]) << '\n';
  if (!f) throw DataError("failed writing " + path.string());
}

struct PredictionRows {
  std::vector<std::string> ids;
  std::vector<int> labels;
};

inline PredictionRows read_predictions(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "image,prediction") {
    throw DataError(path.string() + ": expected header 'image,prediction'");
  }
  PredictionRows rows;
  while (std::getline(f, line)) {
    const auto comma = line.rfind(',');
    const auto cls = comma == std::string::npos ? std::nullopt : class_index(line.substr(comma + 1));
    if (!cls) throw DataError(path.string() + ": malformed row '" + line + "'");
    rows.ids.push_back(line.substr(0, comma));
    rows.labels.push_back(*cls);
  }
  return rows;
}

} // namespace gplab
