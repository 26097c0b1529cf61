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

// Multi-seed runs and ablation grids, plus their CSV renderings.

#pragma once

#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgln/config.hpp"
#include "kgln/metrics.hpp"
#include "kgln/text.hpp"
#include "kgln/training.hpp"

namespace kgln {

struct RunResult {
  std::uint64_t seed = 0;
  TrainReport report;
  MetricReport test;
  KglnParams params;
};

struct RunManyResult {
  std::vector<RunResult> runs;
  MeanStd auc;
  MeanStd f1;
};

using RunCallback = std::function<void(std::size_t run_index, const RunResult&)>;
using RunEpochCallback = std::function<void(std::size_t run_index, const EpochRecord&)>;

/// fit() with seeds seed+0 .. seed+runs-1, each scored on the test split.
inline RunManyResult run_many(const KnowledgeGraph& g, const InteractionSet& data, const KglnConfig& cfg,
                              std::size_t runs, const RunCallback& on_run = {}, bool keep_params = true,
                              const RunEpochCallback& on_epoch = {}) {
  if (runs == 0) throw std::invalid_argument("run_many: runs must be >= 1");
  RunManyResult out;
  std::vector<double> aucs, f1s;
  for (std::size_t i = 0; i < runs; ++i) {
    KglnConfig run_cfg = cfg;
    run_cfg.train.seed = cfg.train.seed + i;
    EpochCallback forward_epoch;
    if (on_epoch) forward_epoch = [&](const EpochRecord& e) { on_epoch(i, e); };
    FitResult fr = fit(g, data, run_cfg, forward_epoch);
    RunResult rr;
    rr.seed = run_cfg.train.seed;
    rr.test = evaluate(fr.params, g, data, Split::test, eval_seed_for(rr.seed));
    rr.report = std::move(fr.report);
    rr.params = std::move(fr.params);
    aucs.push_back(rr.test.auc);
    f1s.push_back(rr.test.f1);
    if (on_run) on_run(i, rr);
    if (!keep_params) rr.params = KglnParams{};
    out.runs.push_back(std::move(rr));
  }
  out.auc = mean_std(aucs);
  out.f1 = mean_std(f1s);
  return out;
}

struct GridAxes {
  std::vector<Aggregator> aggregators;
  std::vector<AttentionMode> modes;
  std::vector<std::size_t> depths;

  bool empty() const { return aggregators.empty() && modes.empty() && depths.empty(); }
};

/// `aggregator=gcn,graphsage,bi;attention=influence,mean;H=1,2,3`.
/// Axes left out keep the base configuration's value.
inline GridAxes parse_axes(std::string_view spec) {
  GridAxes axes;
  bool any = false;
  for (auto part : split_fields(spec, ';')) {
    part = trim(part);
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string_view::npos) throw ConfigError("axis needs name=values: '" + std::string(part) + "'", std::string(part));
    const std::string name(trim(part.substr(0, eq)));
    const auto values = split_fields(part.substr(eq + 1), ',');
    for (auto v : values) {
      v = trim(v);
      if (v.empty()) throw ConfigError("empty value on axis '" + name + "'", name);
      if (name == "aggregator") {
        const auto a = parse_aggregator(v);
        if (!a) throw ConfigError("unknown aggregator '" + std::string(v) + "'", name);
        axes.aggregators.push_back(*a);
      } else if (name == "attention" || name == "attention_mode") {
        const auto m = parse_attention_mode(v);
        if (!m) throw ConfigError("unknown attention mode '" + std::string(v) + "'", name);
        axes.modes.push_back(*m);
      } else if (name == "H") {
        const auto h = parse_number<std::size_t>(v);
        if (!h || *h == 0) throw ConfigError("invalid depth '" + std::string(v) + "'", name);
        axes.depths.push_back(*h);
      } else {
        throw ConfigError("unknown axis '" + name + "'", name);
      }
    }
    any = true;
  }
  if (!any || axes.empty()) throw ConfigError("empty axes specification", "axes");
  return axes;
}

struct GridCell {
  ModelConfig model;
  RunManyResult result;
};

/// Cartesian product of the axes; every cell uses the same seeds.
inline std::vector<ModelConfig> grid_cells(const ModelConfig& base, const GridAxes& axes) {
  const auto aggs = axes.aggregators.empty() ? std::vector<Aggregator>{base.aggregator} : axes.aggregators;
  const auto modes = axes.modes.empty() ? std::vector<AttentionMode>{base.attention} : axes.modes;
  const auto depths = axes.depths.empty() ? std::vector<std::size_t>{base.H} : axes.depths;
  std::vector<ModelConfig> out;
  for (auto a : aggs)
    for (auto m : modes)
      for (auto h : depths) {
        ModelConfig c = base;
        c.aggregator = a;
        c.attention = m;
        c.H = h;
        out.push_back(c);
      }
  return out;
}

inline std::vector<GridCell> run_ablation_grid(const KnowledgeGraph& g, const InteractionSet& data,
                                               const KglnConfig& base, const GridAxes& axes, std::size_t runs,
                                               const std::function<void(const GridCell&)>& on_cell = {},
                                               const RunCallback& on_run = {}) {
  std::vector<GridCell> out;
  for (const ModelConfig& m : grid_cells(base.model, axes)) {
    KglnConfig cfg = base;
    cfg.model = m;
    GridCell cell{m, run_many(g, data, cfg, runs, on_run, false)};
    if (on_cell) on_cell(cell);
    out.push_back(std::move(cell));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_metrics_csv_header(std::ostream& out) { out << "dataset,aggregator,attention_mode,H,K,d,run_seed,auc,f1\n"; }

inline void write_metrics_csv_row(std::ostream& out, std::string_view dataset, const ModelConfig& m,
                                  std::uint64_t seed, const MetricReport& r) {
  out << dataset << ',' << to_string(m.aggregator) << ',' << to_string(m.attention) << ',' << m.H << ',' << m.K << ','
      << m.d << ',' << seed << ',' << format_number(r.auc) << ',' << format_number(r.f1) << '\n';
}

inline void write_train_report_csv(std::ostream& out, const TrainReport& r) {
  out << "epoch,train_loss,val_auc,val_f1\n";
  for (const auto& e : r.epochs) {
    out << e.epoch << ',' << format_number(e.train_loss) << ',' << format_number(e.val_auc) << ','
        << format_number(e.val_f1) << '\n';
  }
}

/// One row per grid cell.
inline void write_ablation_csv(std::ostream& out, const std::vector<GridCell>& cells) {
  out << "aggregator,attention_mode,H,K,d,runs,auc_mean,auc_std,f1_mean,f1_std\n";
  for (const auto& c : cells) {
    out << to_string(c.model.aggregator) << ',' << to_string(c.model.attention) << ',' << c.model.H << ','
        << c.model.K << ',' << c.model.d << ',' << c.result.runs.size() << ',' << format_number(c.result.auc.mean)
        << ',' << format_number(c.result.auc.std) << ',' << format_number(c.result.f1.mean) << ','
        << format_number(c.result.f1.std) << '\n';
  }
}

/// Aggregator rows x attention-mode columns (mean AUC), one block per H.
inline void write_attention_table_csv(std::ostream& out, const std::vector<GridCell>& cells) {
  out << "aggregator,H,influence_auc,mean_auc\n";
  std::vector<std::pair<Aggregator, std::size_t>> keys;
  for (const auto& c : cells) {
    const auto k = std::make_pair(c.model.aggregator, c.model.H);
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [agg, h] : keys) {
    std::string inf = "", mean = "";
    for (const auto& c : cells) {
      if (c.model.aggregator != agg || c.model.H != h) continue;
      (c.model.attention == AttentionMode::influence ? inf : mean) = format_number(c.result.auc.mean);
    }
    out << to_string(agg) << ',' << h << ',' << inf << ',' << mean << '\n';
  }
}

/// Depth rows with AUC and F1, one block per (aggregator, mode).
inline void write_depth_table_csv(std::ostream& out, const std::vector<GridCell>& cells) {
  out << "aggregator,attention_mode,H,auc,f1\n";
  for (const auto& c : cells) {
    out << to_string(c.model.aggregator) << ',' << to_string(c.model.attention) << ',' << c.model.H << ','
        << format_number(c.result.auc.mean) << ',' << format_number(c.result.f1.mean) << '\n';
  }
}

}  // namespace kgln
