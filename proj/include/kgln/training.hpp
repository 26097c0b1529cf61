/*
 * Copyright 2026 The KGLN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Optimizing KglnParams: cross-entropy over positives and per-user equal
// numbers of sampled negatives, plus L2; lazy Adam or SGD; validation-AUC
// early stopping.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kgln/config.hpp"
#include "kgln/errors.hpp"
#include "kgln/graph.hpp"
#include "kgln/ingest.hpp"
#include "kgln/metrics.hpp"
#include "kgln/model.hpp"
#include "kgln/random.hpp"

namespace kgln {

inline constexpr double kProbClamp = 1e-7;

/// phi(y, y_hat) = -[y ln y_hat + (1-y) ln(1-y_hat)], y_hat clamped to
/// [1e-7, 1-1e-7].
inline double cross_entropy(int label, double y_hat) {
  const double p = std::clamp(y_hat, kProbClamp, 1.0 - kProbClamp);
  return label ? -std::log(p) : -std::log1p(-p);
}

/// d phi / d y_hat of the clamped loss (zero where the clamp is active).
inline double cross_entropy_grad(int label, double y_hat) {
  if (y_hat < kProbClamp || y_hat > 1.0 - kProbClamp) return 0.0;
  return label ? -1.0 / y_hat : 1.0 / (1.0 - y_hat);
}

/// sum_pos phi(1, y) + sum_neg phi(0, y) + lambda ||Theta||^2.
inline double kgln_loss(std::span<const double> y_pos, std::span<const double> y_neg, const KglnParams& p,
                        double lambda) {
  double loss = 0.0;
  for (double y : y_pos) loss += cross_entropy(1, y);
  for (double y : y_neg) loss += cross_entropy(0, y);
  if (lambda != 0.0) loss += lambda * squared_norm(p);
  return loss;
}

/// Training negatives for one epoch: per user, as many as the user's train
/// positives, uniform over the user's non-positive items. The stream
/// depends on (seed, epoch).
inline std::vector<std::pair<UserId, ItemId>> resample_training_negatives(
    std::span<const std::pair<UserId, ItemId>> train_positives, std::size_t item_count, std::size_t epoch,
    std::uint64_t seed) {
  return sample_dataset_negatives(train_positives, item_count, derive_seed(seed, {0x747261696e, epoch}));
}

struct Example {
  UserId user = 0;
  ItemId item = 0;
  std::uint8_t label = 0;
};

/// Which rows the L2 term covers.
enum class RegularizationScope {
  all,      // every parameter: the literal objective
  touched,  // only rows that received a data gradient, plus layer weights
};

namespace detail {
inline void regularize_rows(const DenseMatrix& table, std::map<std::uint32_t, Vec64>& grads, double lambda,
                            double& penalty) {
  for (auto& [id, g] : grads) {
    const auto row = table.row(id);
    for (std::size_t i = 0; i < row.size(); ++i) {
      penalty += lambda * double(row[i]) * double(row[i]);
      g[i] += 2.0 * lambda * double(row[i]);
    }
  }
}
inline void regularize_dense(std::span<const float> w, std::span<double> g, double lambda, double& penalty) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    penalty += lambda * double(w[i]) * double(w[i]);
    g[i] += 2.0 * lambda * double(w[i]);
  }
}
}  // namespace detail

/// Loss and gradient of a batch of examples with given receptive fields.
inline double batch_objective(const KglnParams& p, std::span<const Example> examples,
                              std::span<const ReceptiveField> fields, double lambda, RegularizationScope scope,
                              KglnGradients& grads, std::vector<double>* y_hats = nullptr) {
  detail::require_same_dim(examples.size(), fields.size(), "batch_objective");
  double loss = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const ForwardTrace t = forward(p, examples[i].user, fields[i]);
    if (y_hats) y_hats->push_back(t.y_hat);
    loss += cross_entropy(examples[i].label, t.y_hat);
    backward(p, t, cross_entropy_grad(examples[i].label, t.y_hat), grads);
  }
  if (lambda == 0.0) return loss;
  if (scope == RegularizationScope::all) {
    auto touch_all = [&](std::map<std::uint32_t, Vec64>& m, std::size_t rows) {
      for (std::uint32_t r = 0; r < rows; ++r) KglnGradients::row(m, r, p.config.d);
    };
    touch_all(grads.users, p.users.rows());
    touch_all(grads.entities, p.entities.rows());
    touch_all(grads.relations, p.relations.rows());
  }
  double penalty = 0.0;
  detail::regularize_rows(p.users, grads.users, lambda, penalty);
  detail::regularize_rows(p.entities, grads.entities, lambda, penalty);
  detail::regularize_rows(p.relations, grads.relations, lambda, penalty);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    detail::regularize_dense(p.layers[l].W.flat(), grads.layers[l].W.flat(), lambda, penalty);
    detail::regularize_dense(p.layers[l].b.span(), grads.layers[l].b.span(), lambda, penalty);
    detail::regularize_dense(p.layers[l].W1.flat(), grads.layers[l].W1.flat(), lambda, penalty);
    detail::regularize_dense(p.layers[l].W2.flat(), grads.layers[l].W2.flat(), lambda, penalty);
  }
  return loss + penalty;
}

/// SGD or Adam over KglnParams. Adam is lazy: embedding rows keep their
/// moments untouched while absent from a batch.
class Optimizer {
 public:
  Optimizer(const KglnParams& p, const TrainConfig& cfg) : cfg_(cfg) {
    if (cfg.optimizer == OptimizerKind::adam) {
      m_ = zeros_like(p);
      v_ = zeros_like(p);
    }
  }

  void step(KglnParams& p, const KglnGradients& g) {
    ++t_;
    update_rows(p.users, g.users, m_.users, v_.users);
    update_rows(p.entities, g.entities, m_.entities, v_.entities);
    update_rows(p.relations, g.relations, m_.relations, v_.relations);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& L = p.layers[l];
      const auto& G = g.layers[l];
      update(L.W.flat(), G.W.flat(), moment(m_, l, 0), moment(v_, l, 0));
      update(L.b.span(), G.b.span(), moment(m_, l, 1), moment(v_, l, 1));
      update(L.W1.flat(), G.W1.flat(), moment(m_, l, 2), moment(v_, l, 2));
      update(L.W2.flat(), G.W2.flat(), moment(m_, l, 3), moment(v_, l, 3));
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  static KglnParams zeros_like(const KglnParams& p) {
    KglnParams z = p;
    for_each_tensor(z, [](std::span<float> s) { std::fill(s.begin(), s.end(), 0.0f); });
    return z;
  }

  std::span<float> moment(KglnParams& m, std::size_t layer, int which) {
    if (cfg_.optimizer != OptimizerKind::adam) return {};
    auto& L = m.layers[layer];
    switch (which) {
      case 0: return L.W.flat();
      case 1: return L.b.span();
      case 2: return L.W1.flat();
      default: return L.W2.flat();
    }
  }

  void update_rows(DenseMatrix& table, const std::map<std::uint32_t, Vec64>& grads, DenseMatrix& m, DenseMatrix& v) {
    for (const auto& [id, g] : grads) {
      if (id >= table.rows()) throw IdError("gradient row out of range");
      if (cfg_.optimizer == OptimizerKind::adam) update(table.row(id), g.span(), m.row(id), v.row(id));
      else update(table.row(id), g.span(), {}, {});
    }
  }

  void update(std::span<float> w, std::span<const double> g, std::span<float> m, std::span<float> v) {
    if (cfg_.optimizer == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = float(double(w[i]) - cfg_.lr * g[i]);
      return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double mi = cfg_.beta1 * double(m[i]) + (1.0 - cfg_.beta1) * g[i];
      const double vi = cfg_.beta2 * double(v[i]) + (1.0 - cfg_.beta2) * g[i] * g[i];
      m[i] = float(mi);
      v[i] = float(vi);
      const double step = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.adam_eps);
      w[i] = float(double(w[i]) - step);
    }
  }

  TrainConfig cfg_;
  KglnParams m_;
  KglnParams v_;
  std::size_t t_ = 0;
};

struct EpochResult {
  double mean_loss = 0.0;
  std::size_t examples = 0;
  std::size_t batches = 0;
};

/// One pass over the train positives plus freshly drawn negatives, in
/// shuffled minibatches.
inline EpochResult train_epoch(KglnParams& p, Optimizer& opt, const KnowledgeGraph& g, const InteractionSet& data,
                               std::span<const std::pair<UserId, ItemId>> train_positives, const TrainConfig& cfg,
                               std::size_t epoch) {
  cfg.validate();
  const auto negatives = resample_training_negatives(train_positives, data.item_count, epoch, cfg.seed);
  std::vector<Example> examples;
  examples.reserve(train_positives.size() + negatives.size());
  for (const auto& [u, v] : train_positives) examples.push_back({u, v, 1});
  for (const auto& [u, v] : negatives) examples.push_back({u, v, 0});
  Rng shuffle_rng(derive_seed(cfg.seed, {0x73687566, epoch}));
  std::shuffle(examples.begin(), examples.end(), shuffle_rng);

  EpochResult out;
  double loss_sum = 0.0;
  std::vector<ReceptiveField> fields;
  for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(examples.size(), start + cfg.batch_size);
    const std::span<const Example> batch(examples.data() + start, end - start);
    Rng field_rng(derive_seed(cfg.seed, {0x6669656c64, epoch, out.batches}));
    fields.clear();
    for (const Example& e : batch) {
      fields.push_back(build_receptive_field(g, data.entity_of(e.item), p.config.K, p.config.H, field_rng));
    }
    KglnGradients grads = KglnGradients::zeros_like(p);
    const double loss = batch_objective(p, batch, fields, cfg.l2, RegularizationScope::touched, grads);
    if (!std::isfinite(loss)) {
      std::string ids;
      for (std::size_t i = 0; i < batch.size() && i < 8; ++i)
        ids += " (" + std::to_string(batch[i].user) + "," + std::to_string(batch[i].item) + ")";
      throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + " batch " + std::to_string(out.batches) +
                         "; first pairs:" + ids);
    }
    opt.step(p, grads);
    loss_sum += loss / double(batch.size());
    ++out.batches;
  }
  out.examples = examples.size();
  out.mean_loss = out.batches ? loss_sum / double(out.batches) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation over a stored split.

/// Seed of the frozen evaluation fields for a given run seed.
inline std::uint64_t eval_seed_for(std::uint64_t run_seed) { return derive_seed(run_seed, {0x66726f7a656e}); }

inline std::vector<ScoredLabel> score_records(const KglnParams& p, const KnowledgeGraph& g, const InteractionSet& data,
                                              std::span<const Interaction> records, std::uint64_t eval_seed) {
  std::vector<ScoredLabel> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({predict(p, g, data, r.user, r.item, eval_seed), r.label});
  return out;
}

/// AUC and F1 at 0.5 over one split, with frozen receptive fields.
inline MetricReport evaluate(const KglnParams& p, const KnowledgeGraph& g, const InteractionSet& data, Split split,
                             std::uint64_t eval_seed, double threshold = 0.5) {
  const auto records = data.in_split(split);
  const auto scored = score_records(p, g, data, records, eval_seed);
  return metric_report(scored, threshold);
}

// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double val_f1 = 0.0;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

struct FitResult {
  KglnParams params;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from a fresh initialization; keeps the parameters of the epoch
/// with the best validation AUC and stops after `patience` epochs without
/// improvement.
inline FitResult fit(const KnowledgeGraph& g, const InteractionSet& data, const KglnConfig& cfg,
                     const EpochCallback& on_epoch = {}) {
  cfg.model.validate();
  cfg.train.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto train_pos = data.positives(Split::train);
  if (train_pos.empty()) throw DataError("fit: train split has no positive records");

  KglnParams p = init_params(cfg.model, data.user_count, g.entity_count(), g.relation_count(), cfg.train.seed);
  Optimizer opt(p, cfg.train);
  const std::uint64_t eval_seed = eval_seed_for(cfg.train.seed);

  FitResult out;
  out.report.seed = cfg.train.seed;
  out.params = p;
  bool have_best = false;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.train.max_epochs; ++epoch) {
    const EpochResult er = train_epoch(p, opt, g, data, train_pos, cfg.train, epoch);
    const MetricReport val = evaluate(p, g, data, Split::val, eval_seed);
    const EpochRecord rec{epoch, er.mean_loss, val.auc, val.f1};
    out.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!have_best || val.auc > out.report.best_val_auc) {
      have_best = true;
      out.report.best_val_auc = val.auc;
      out.report.best_epoch = epoch;
      out.params = p;
      since_best = 0;
    } else if (++since_best >= cfg.train.patience) {
      break;
    }
  }
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace kgln
