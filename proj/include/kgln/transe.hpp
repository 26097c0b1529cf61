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

// TransE embeddings (tail ~ head + relation) and knowledge-graph
// completion on top of them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <ostream>
#include <span>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "kgln/checkpoint.hpp"
#include "kgln/errors.hpp"
#include "kgln/graph.hpp"
#include "kgln/random.hpp"
#include "kgln/tensor.hpp"
#include "kgln/text.hpp"

namespace kgln {

struct TransEModel {
  DenseMatrix entities;   // |E| x dim, unit rows after training
  DenseMatrix relations;  // |R| x dim
  std::vector<double> loss_history;

  std::size_t dim() const { return entities.cols(); }
  double final_loss() const { return loss_history.empty() ? 0.0 : loss_history.back(); }
};

struct TransEConfig {
  std::size_t dim = 16;
  double margin = 1.0;
  double lr = 0.01;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
};

/// -||h + r - t||_2. Zero exactly when t = h + r.
inline double transe_score(const TransEModel& m, EntityId h, RelationId r, EntityId t) {
  if (h >= m.entities.rows() || t >= m.entities.rows()) throw IdError("transe_score: entity id out of range");
  if (r >= m.relations.rows()) throw IdError("transe_score: relation id out of range");
  const auto hv = m.entities.row(h), rv = m.relations.row(r), tv = m.entities.row(t);
  double ss = 0.0;
  for (std::size_t i = 0; i < hv.size(); ++i) {
    const double x = double(hv[i]) + double(rv[i]) - double(tv[i]);
    ss += x * x;
  }
  return -std::sqrt(ss);
}

namespace detail {
inline void normalize_rows(DenseMatrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double ss = 0.0;
    for (float x : row) ss += double(x) * double(x);
    if (ss == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    for (float& x : row) x = float(double(x) * inv);
  }
}

// residual h + r - t and its norm
inline double residual(const TransEModel& m, const Triple& t, std::vector<double>& out) {
  const auto hv = m.entities.row(t.head), rv = m.relations.row(t.relation), tv = m.entities.row(t.tail);
  out.resize(hv.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < hv.size(); ++i) {
    out[i] = double(hv[i]) + double(rv[i]) - double(tv[i]);
    ss += out[i] * out[i];
  }
  return std::sqrt(ss);
}
}  // namespace detail

/// Margin ranking loss sum max(0, margin + d(h,r,t) - d(h',r,t')) with one
/// corrupted triple per positive (head or tail replaced uniformly, coin
/// flip), plain SGD, entity rows renormalized at the start of every epoch
/// and after the last one.
inline TransEModel train_transe(const KnowledgeGraph& g, const TransEConfig& cfg) {
  if (g.entity_count() == 0 || g.triples().empty()) throw DataError("train_transe: empty knowledge graph");
  if (!(cfg.margin > 0.0)) throw std::invalid_argument("train_transe: margin must be positive");
  if (cfg.dim == 0) throw std::invalid_argument("train_transe: dim must be >= 1");

  Rng rng(derive_seed(cfg.seed, {0x7472616e7365}));
  TransEModel m;
  m.entities = DenseMatrix(g.entity_count(), cfg.dim);
  m.relations = DenseMatrix(g.relation_count(), cfg.dim);
  const double bound = 6.0 / std::sqrt(double(cfg.dim));
  std::uniform_real_distribution<float> init(float(-bound), float(bound));
  for (float& x : m.entities.flat()) x = init(rng);
  for (float& x : m.relations.flat()) x = init(rng);
  detail::normalize_rows(m.relations);
  detail::normalize_rows(m.entities);

  std::vector<Triple> order(g.triples().begin(), g.triples().end());
  std::vector<double> pos_res, neg_res;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::normalize_rows(m.entities);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (const Triple& pos : order) {
      Triple neg = pos;
      const bool corrupt_head = coin(rng);
      // Prefer corruptions that are not themselves known triples.
      for (int attempt = 0; attempt < 10; ++attempt) {
        neg = pos;
        (corrupt_head ? neg.head : neg.tail) = EntityId(uniform_index(rng, g.entity_count()));
        if (!g.contains(neg)) break;
      }
      const double dp = detail::residual(m, pos, pos_res);
      const double dn = detail::residual(m, neg, neg_res);
      const double loss = cfg.margin + dp - dn;
      if (loss <= 0.0) continue;
      epoch_loss += loss;
      auto h = m.entities.row(pos.head), t = m.entities.row(pos.tail), r = m.relations.row(pos.relation);
      auto hn = m.entities.row(neg.head), tn = m.entities.row(neg.tail);
      for (std::size_t i = 0; i < cfg.dim; ++i) {
        const double gp = dp > 0.0 ? pos_res[i] / dp : 0.0;
        const double gn = dn > 0.0 ? neg_res[i] / dn : 0.0;
        h[i] = float(h[i] - cfg.lr * gp);
        t[i] = float(t[i] + cfg.lr * gp);
        r[i] = float(r[i] - cfg.lr * (gp - gn));
        hn[i] = float(hn[i] + cfg.lr * gn);
        tn[i] = float(tn[i] - cfg.lr * gn);
      }
    }
    m.loss_history.push_back(epoch_loss);
  }
  detail::normalize_rows(m.entities);
  return m;
}

struct ScoredEntity {
  EntityId entity = 0;
  double score = 0.0;
};

/// argmax_r score(h, r, t); ties go to the lowest relation id. Relations
/// can be excluded (e.g. the synthetic self relation).
inline std::pair<RelationId, double> predict_relation(const TransEModel& m, EntityId h, EntityId t,
                                                      std::span<const RelationId> exclude = {}) {
  if (m.relations.rows() == 0) throw DataError("predict_relation: empty relation vocabulary");
  std::optional<std::pair<RelationId, double>> best;
  for (RelationId r = 0; r < m.relations.rows(); ++r) {
    if (std::find(exclude.begin(), exclude.end(), r) != exclude.end()) continue;
    const double s = transe_score(m, h, r, t);
    if (!best || s > best->second) best = std::make_pair(r, s);
  }
  if (!best) throw DataError("predict_relation: every relation excluded");
  return *best;
}

namespace detail {
inline std::vector<ScoredEntity> rank_entities(const TransEModel& m, std::size_t top_n, auto&& score_of,
                                               auto&& excluded) {
  if (top_n == 0) throw std::invalid_argument("top_n must be >= 1");
  std::vector<ScoredEntity> all;
  all.reserve(m.entities.rows());
  for (EntityId e = 0; e < m.entities.rows(); ++e) {
    if (excluded(e)) continue;
    all.push_back({e, score_of(e)});
  }
  const auto better = [](const ScoredEntity& a, const ScoredEntity& b) {
    return a.score != b.score ? a.score > b.score : a.entity < b.entity;
  };
  if (all.size() > top_n) {
    std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(top_n), all.end(), better);
    all.resize(top_n);
  } else {
    std::sort(all.begin(), all.end(), better);
  }
  return all;
}
}  // namespace detail

/// Top-n tails for (h, r, ?) by score, ties by entity id. When `known` is
/// given, tails already linked to h via r are skipped.
inline std::vector<ScoredEntity> predict_tail(const TransEModel& m, EntityId h, RelationId r, std::size_t top_n,
                                              const KnowledgeGraph* known = nullptr) {
  return detail::rank_entities(
      m, top_n, [&](EntityId t) { return transe_score(m, h, r, t); },
      [&](EntityId t) { return known && known->contains({h, r, t}); });
}

/// Top-n heads for (?, r, t).
inline std::vector<ScoredEntity> predict_head(const TransEModel& m, RelationId r, EntityId t, std::size_t top_n,
                                              const KnowledgeGraph* known = nullptr) {
  return detail::rank_entities(
      m, top_n, [&](EntityId h) { return transe_score(m, h, r, t); },
      [&](EntityId h) { return known && known->contains({h, r, t}); });
}

struct ScoredTriple {
  Triple triple;
  double score = 0.0;
};

struct CompletionReport {
  std::vector<ScoredTriple> added;  // score descending
  double threshold_used = 0.0;
  std::size_t candidates_considered = 0;
};

struct CompletionOptions {
  /// Entities whose 2-hop neighborhood forms the candidate pool; empty
  /// means every entity.
  std::vector<EntityId> anchors;
  std::size_t hops = 2;
  std::size_t max_pool = 5000;
  std::size_t per_query = 3;
};

/// Entities within `hops` of any anchor, BFS order, at most `cap`.
inline std::vector<EntityId> neighborhood_pool(const KnowledgeGraph& g, std::span<const EntityId> anchors,
                                               std::size_t hops, std::size_t cap) {
  std::vector<EntityId> out;
  if (anchors.empty()) {
    for (EntityId e = 0; e < g.entity_count() && out.size() < cap; ++e) out.push_back(e);
    return out;
  }
  std::vector<int> depth(g.entity_count(), -1);
  std::deque<EntityId> queue;
  for (EntityId a : anchors) {
    g.check_entity(a);
    if (depth[a] < 0) {
      depth[a] = 0;
      queue.push_back(a);
    }
  }
  while (!queue.empty() && out.size() < cap) {
    const EntityId v = queue.front();
    queue.pop_front();
    out.push_back(v);
    if (std::size_t(depth[v]) >= hops) continue;
    for (const Edge& e : g.neighbors(v)) {
      if (depth[e.entity] < 0) {
        depth[e.entity] = depth[v] + 1;
        queue.push_back(e.entity);
      }
    }
  }
  return out;
}

/// Adds up to `max_added` unseen triples scoring at least `threshold`
/// (which must be <= 0). Candidates are the top tail and head predictions
/// for every (pool entity, relation). The input graph is not modified.
inline std::pair<KnowledgeGraph, CompletionReport> complete_graph(const KnowledgeGraph& g, const TransEModel& m,
                                                                  double threshold, std::size_t max_added,
                                                                  const CompletionOptions& opts = {}) {
  if (threshold > 0.0) throw std::invalid_argument("complete_graph: threshold must be <= 0");
  if (m.entities.rows() != g.entity_count() || m.relations.rows() != g.relation_count()) {
    throw ShapeError("complete_graph: model vocabulary does not match the graph");
  }
  CompletionReport report;
  report.threshold_used = threshold;
  if (max_added == 0) return {g, report};

  const auto pool = neighborhood_pool(g, opts.anchors, opts.hops, opts.max_pool);
  std::unordered_set<Triple, TripleHash> seen;
  std::vector<ScoredTriple> candidates;
  auto consider = [&](const Triple& t, double score) {
    if (t.head == t.tail || g.contains(t) || !seen.insert(t).second) return;
    ++report.candidates_considered;
    if (score >= threshold) candidates.push_back({t, score});
  };
  for (EntityId e : pool) {
    for (RelationId r = 0; r < g.relation_count(); ++r) {
      if (g.self_relation() && *g.self_relation() == r) continue;
      for (const auto& s : predict_tail(m, e, r, opts.per_query, &g)) consider({e, r, s.entity}, s.score);
      for (const auto& s : predict_head(m, r, e, opts.per_query, &g)) consider({s.entity, r, e}, s.score);
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
    return a.score != b.score ? a.score > b.score : a.triple < b.triple;
  });
  if (candidates.size() > max_added) candidates.resize(max_added);
  report.added = std::move(candidates);

  std::vector<Triple> extra;
  for (const auto& s : report.added) extra.push_back(s.triple);
  return {g.with_added_triples(extra), std::move(report)};
}

/// Header row, then `head<TAB>relation<TAB>tail<TAB>score` in report order.
inline void write_completion_report(std::ostream& out, const KnowledgeGraph& g, const CompletionReport& r) {
  out << "head\trelation\ttail\tscore\n";
  for (const auto& s : r.added) {
    out << g.entities().name(s.triple.head) << '\t' << g.relations().name(s.triple.relation) << '\t'
        << g.entities().name(s.triple.tail) << '\t' << format_number(s.score) << '\n';
  }
}

inline void save_transe(std::ostream& out, const TransEModel& m) {
  write_sections(out, {{"transe.entities", m.entities}, {"transe.relations", m.relations}});
}

inline TransEModel load_transe(std::istream& in) {
  TransEModel m;
  for (auto& s : read_sections(in)) {
    if (s.name == "transe.entities") m.entities = std::move(s.value);
    else if (s.name == "transe.relations") m.relations = std::move(s.value);
  }
  if (m.entities.cols() != m.relations.cols()) throw ShapeError("transe checkpoint: dimension mismatch");
  return m;
}

}  // namespace kgln
