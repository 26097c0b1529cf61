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

// The KGLN network: parameters, receptive fields, influence-factor
// attention, the GCN / GraphSAGE / Bi-Interaction aggregators, the H-hop
// forward pass and its exact adjoint.
//
// Representation of a node at order h is computed from its own order h-1
// representation and those of its K sampled children:
//
//   s_user[k]   = <u, r_k>           w_user   = softmax(s_user)
//   s_entity[k] = <v^{h-1}, e_k>     w_entity = softmax(s_entity)
//   v_N         = c * sum_k (w_user[k] + w_entity[k]) e_k^{h-1}
//   v^h         = aggregate(v^{h-1}, v_N)
//
// with c = 1 (literal form) or 1/2 (combine = avg). In mean mode v_N is the
// plain average of the children. The item score is sigmoid(<u, v^H>).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgln/errors.hpp"
#include "kgln/graph.hpp"
#include "kgln/ingest.hpp"
#include "kgln/random.hpp"
#include "kgln/tensor.hpp"

namespace kgln {

enum class Aggregator { gcn, graphsage, bi };
enum class AttentionMode { influence, mean };
enum class Combine { sum, avg };

inline std::string_view to_string(Aggregator a) {
  switch (a) {
    case Aggregator::gcn: return "gcn";
    case Aggregator::graphsage: return "graphsage";
    case Aggregator::bi: return "bi";
  }
  return "?";
}
inline std::string_view to_string(AttentionMode m) { return m == AttentionMode::influence ? "influence" : "mean"; }
inline std::string_view to_string(Combine c) { return c == Combine::sum ? "sum" : "avg"; }

inline std::optional<Aggregator> parse_aggregator(std::string_view s) {
  if (s == "gcn") return Aggregator::gcn;
  if (s == "graphsage" || s == "gs" || s == "sage") return Aggregator::graphsage;
  if (s == "bi" || s == "bi_interaction" || s == "bi-interaction") return Aggregator::bi;
  return std::nullopt;
}
inline std::optional<AttentionMode> parse_attention_mode(std::string_view s) {
  if (s == "influence") return AttentionMode::influence;
  if (s == "mean") return AttentionMode::mean;
  return std::nullopt;
}
inline std::optional<Combine> parse_combine(std::string_view s) {
  if (s == "sum") return Combine::sum;
  if (s == "avg") return Combine::avg;
  return std::nullopt;
}

struct ModelConfig {
  std::size_t d = 16;
  std::size_t K = 4;
  std::size_t H = 2;
  Aggregator aggregator = Aggregator::bi;
  AttentionMode attention = AttentionMode::influence;
  Combine combine = Combine::sum;
  bool tie_layers = false;
  double leaky_slope = kDefaultLeakySlope;

  void validate() const {
    if (d == 0 || K == 0 || H == 0) throw std::invalid_argument("model config: d, K and H must be >= 1");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw std::invalid_argument("model config: leaky slope in (0,1)");
  }
  std::size_t layer_count() const { return tie_layers ? 1 : H; }
};

/// Weights of one aggregation layer. Only the members used by the
/// configured aggregator are non-empty: gcn (W d x d, b), graphsage
/// (W d x 2d, b), bi (W1, W2 d x d, no bias).
struct LayerWeights {
  DenseMatrix W;
  DenseVector b;
  DenseMatrix W1;
  DenseMatrix W2;
  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct KglnParams {
  ModelConfig config;
  DenseMatrix users;      // M x d
  DenseMatrix entities;   // |E| x d
  DenseMatrix relations;  // |R| x d
  std::vector<LayerWeights> layers;

  /// Weights used for the order-`order` aggregation (order is 1-based).
  const LayerWeights& layer_for(std::size_t order) const { return layers.at(config.tie_layers ? 0 : order - 1); }
  std::size_t layer_index(std::size_t order) const { return config.tie_layers ? 0 : order - 1; }

  friend bool operator==(const KglnParams& a, const KglnParams& b) {
    return a.users == b.users && a.entities == b.entities && a.relations == b.relations && a.layers == b.layers;
  }
};

/// Embeddings uniform in [-1/sqrt(d), 1/sqrt(d)]; aggregator weights
/// Glorot-uniform; biases zero.
inline KglnParams init_params(const ModelConfig& cfg, std::size_t n_users, std::size_t n_entities,
                              std::size_t n_relations, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, {0x696e6974}));
  const std::size_t d = cfg.d;
  auto fill = [&](DenseMatrix& m, double bound) {
    std::uniform_real_distribution<float> dist(float(-bound), float(bound));
    for (float& x : m.flat()) x = dist(rng);
  };
  KglnParams p;
  p.config = cfg;
  const double emb = 1.0 / std::sqrt(double(d));
  p.users = DenseMatrix(n_users, d);
  p.entities = DenseMatrix(n_entities, d);
  p.relations = DenseMatrix(n_relations, d);
  fill(p.users, emb);
  fill(p.entities, emb);
  fill(p.relations, emb);
  p.layers.resize(cfg.layer_count());
  for (auto& L : p.layers) {
    switch (cfg.aggregator) {
      case Aggregator::gcn:
        L.W = DenseMatrix(d, d);
        fill(L.W, std::sqrt(6.0 / double(2 * d)));
        L.b = DenseVector(d);
        break;
      case Aggregator::graphsage:
        L.W = DenseMatrix(d, 2 * d);
        fill(L.W, std::sqrt(6.0 / double(3 * d)));
        L.b = DenseVector(d);
        break;
      case Aggregator::bi:
        L.W1 = DenseMatrix(d, d);
        L.W2 = DenseMatrix(d, d);
        fill(L.W1, std::sqrt(6.0 / double(2 * d)));
        fill(L.W2, std::sqrt(6.0 / double(2 * d)));
        break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Receptive field

struct FieldNode {
  EntityId entity = 0;
  RelationId relation = 0;  // edge from the parent; unused at the root
  std::uint32_t parent = 0;
};

/// Layer h holds K^h nodes; the children of node n of layer h-1 are
/// nodes n*K .. n*K+K-1 of layer h.
struct ReceptiveField {
  EntityId root = 0;
  std::size_t K = 0;
  std::size_t H = 0;
  std::vector<std::vector<FieldNode>> layers;

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }
};

template <class Engine>
ReceptiveField build_receptive_field(const KnowledgeGraph& g, EntityId item_entity, std::size_t K, std::size_t H,
                                     Engine& rng) {
  if (H == 0 || K == 0) throw std::invalid_argument("build_receptive_field: K and H must be >= 1");
  g.check_entity(item_entity);
  ReceptiveField f;
  f.root = item_entity;
  f.K = K;
  f.H = H;
  f.layers.resize(H + 1);
  f.layers[0].push_back({item_entity, 0, 0});
  for (std::size_t h = 1; h <= H; ++h) {
    auto& layer = f.layers[h];
    layer.reserve(f.layers[h - 1].size() * K);
    for (std::uint32_t n = 0; n < f.layers[h - 1].size(); ++n) {
      const auto sample = sample_neighbors(g, f.layers[h - 1][n].entity, K, rng);
      for (const Edge& e : sample.entries) layer.push_back({e.entity, e.relation, n});
    }
  }
  return f;
}

/// Stream seed of the frozen evaluation field for one (user, item) pair.
inline std::uint64_t eval_field_seed(std::uint64_t seed, UserId user, ItemId item) {
  return derive_seed(seed, {0x6576616c, user, item});
}

// ---------------------------------------------------------------------------
// Single-layer building blocks

/// g(u, r): inner product.
template <IndexableRange A, IndexableRange B>
double score_user_relation(const A& u, const B& r) {
  return dot(u, r);
}
template <IndexableRange A, IndexableRange B>
double score_entity_entity(const A& v, const B& e) {
  return dot(v, e);
}

struct AttentionWeights {
  std::vector<double> user_scores;
  std::vector<double> entity_scores;
  std::vector<double> user;    // softmax(user_scores)
  std::vector<double> entity;  // softmax(entity_scores)
};

/// Both normalized influence-factor groups over the K children.
/// `relation_vecs[k]` is the relation embedding on edge k and
/// `neighbor_vecs[k]` the child's current representation.
inline AttentionWeights attention_weights(std::span<const double> user_vec, std::span<const double> center_vec,
                                          const std::vector<std::span<const float>>& relation_vecs,
                                          const std::vector<std::span<const double>>& neighbor_vecs) {
  detail::require_same_dim(relation_vecs.size(), neighbor_vecs.size(), "attention_weights");
  AttentionWeights a;
  a.user_scores.reserve(relation_vecs.size());
  a.entity_scores.reserve(relation_vecs.size());
  for (std::size_t k = 0; k < relation_vecs.size(); ++k) {
    a.user_scores.push_back(score_user_relation(user_vec, relation_vecs[k]));
    a.entity_scores.push_back(score_entity_entity(center_vec, neighbor_vecs[k]));
  }
  a.user = softmax(a.user_scores);
  a.entity = softmax(a.entity_scores);
  return a;
}

/// Weighted neighborhood vector. In influence mode each child gets
/// (w_user + w_entity) * scale; in mean mode the weights are ignored.
inline Vec64 neighborhood_vector(const std::vector<std::span<const double>>& neighbor_vecs,
                                 std::span<const double> user_w, std::span<const double> entity_w,
                                 AttentionMode mode, Combine combine = Combine::sum) {
  if (neighbor_vecs.empty()) throw ShapeError("neighborhood_vector: no neighbors");
  const std::size_t d = neighbor_vecs.front().size();
  Vec64 out(d);
  const std::size_t K = neighbor_vecs.size();
  if (mode == AttentionMode::mean) {
    for (const auto& e : neighbor_vecs) axpy(1.0 / double(K), e, out.span());
    return out;
  }
  detail::require_same_dim(user_w.size(), K, "neighborhood_vector user weights");
  detail::require_same_dim(entity_w.size(), K, "neighborhood_vector entity weights");
  const double scale = combine == Combine::avg ? 0.5 : 1.0;
  for (std::size_t k = 0; k < K; ++k) axpy(scale * (user_w[k] + entity_w[k]), neighbor_vecs[k], out.span());
  return out;
}

/// Intermediate values of one aggregation, kept for the adjoint.
struct AggregateCache {
  Vec64 input_a;  // v + vN (gcn, bi) or concat(v, vN) (graphsage)
  Vec64 input_b;  // v (.) vN (bi)
  Vec64 pre_a;
  Vec64 pre_b;
};

namespace detail {
inline Vec64 activate(const Vec64& pre, bool last, double slope) { return last ? tanh_act(pre) : leaky_relu(pre, slope); }
inline Vec64 activate_backward(const Vec64& pre, const Vec64& dy, bool last, double slope) {
  return last ? tanh_backward(tanh_act(pre), dy) : leaky_relu_backward(pre, dy, slope);
}
}  // namespace detail

/// gcn: act(W (v + vN) + b); graphsage: act(W [v; vN] + b);
/// bi: act(W1 (v + vN)) + act(W2 (v (.) vN)). act is tanh on the last
/// layer and LeakyReLU otherwise.
inline Vec64 aggregate(const Vec64& v, const Vec64& vN, const LayerWeights& w, Aggregator kind, bool is_last_layer,
                       double slope = kDefaultLeakySlope, AggregateCache* cache = nullptr) {
  detail::require_same_dim(v.dim(), vN.dim(), "aggregate");
  AggregateCache local;
  AggregateCache& c = cache ? *cache : local;
  Vec64 out;
  switch (kind) {
    case Aggregator::gcn:
    case Aggregator::graphsage: {
      c.input_a = kind == Aggregator::gcn ? add(v, vN) : concat(v, vN);
      c.pre_a = matvec(w.W, c.input_a);
      detail::require_same_dim(c.pre_a.dim(), w.b.dim(), "aggregate bias");
      for (std::size_t i = 0; i < c.pre_a.dim(); ++i) c.pre_a[i] += double(w.b[i]);
      out = detail::activate(c.pre_a, is_last_layer, slope);
      break;
    }
    case Aggregator::bi: {
      c.input_a = add(v, vN);
      c.input_b = hadamard(v, vN);
      c.pre_a = matvec(w.W1, c.input_a);
      c.pre_b = matvec(w.W2, c.input_b);
      out = detail::activate(c.pre_a, is_last_layer, slope);
      const Vec64 second = detail::activate(c.pre_b, is_last_layer, slope);
      for (std::size_t i = 0; i < out.dim(); ++i) out[i] += second[i];
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass

/// Everything computed for one node at one order.
struct NodeStep {
  AttentionWeights attention;  // empty in mean mode
  Vec64 neighborhood;
  AggregateCache cache;
};

struct ForwardTrace {
  UserId user = 0;
  ReceptiveField field;
  std::size_t d = 0;
  Aggregator aggregator = Aggregator::bi;
  AttentionMode attention = AttentionMode::influence;
  Vec64 user_vec;
  /// reps[h][j][n]: order-h representation of node n in layer j (j <= H-h).
  std::vector<std::vector<std::vector<Vec64>>> reps;
  /// steps[h][j][n] for h >= 1.
  std::vector<std::vector<std::vector<NodeStep>>> steps;
  double logit = 0.0;
  double y_hat = 0.5;

  const Vec64& item_representation() const { return reps.back().front().front(); }
};

inline void check_field(const KglnParams& p, const ReceptiveField& f) {
  if (f.K != p.config.K || f.H != p.config.H || f.layers.size() != f.H + 1) {
    throw ShapeError("receptive field (K=" + std::to_string(f.K) + ", H=" + std::to_string(f.H) +
                     ") does not match model (K=" + std::to_string(p.config.K) +
                     ", H=" + std::to_string(p.config.H) + ")");
  }
}

inline ForwardTrace forward(const KglnParams& p, UserId user, const ReceptiveField& field) {
  const auto& cfg = p.config;
  check_field(p, field);
  if (user >= p.users.rows()) throw IdError("user id " + std::to_string(user) + " out of range");
  const std::size_t H = cfg.H, K = cfg.K;

  ForwardTrace t;
  t.user = user;
  t.field = field;
  t.d = cfg.d;
  t.aggregator = cfg.aggregator;
  t.attention = cfg.attention;
  t.user_vec = Vec64(p.users.row(user));

  t.reps.resize(H + 1);
  t.steps.resize(H + 1);
  t.reps[0].resize(H + 1);
  for (std::size_t j = 0; j <= H; ++j) {
    auto& layer = t.reps[0][j];
    layer.reserve(field.layers[j].size());
    for (const FieldNode& node : field.layers[j]) {
      if (node.entity >= p.entities.rows()) throw IdError("entity id out of range in receptive field");
      layer.emplace_back(p.entities.row(node.entity));
    }
  }

  std::vector<std::span<const float>> rel_vecs(K);
  std::vector<std::span<const double>> child_vecs(K);
  for (std::size_t h = 1; h <= H; ++h) {
    const LayerWeights& w = p.layer_for(h);
    const bool last = h == H;
    t.reps[h].resize(H - h + 1);
    t.steps[h].resize(H - h + 1);
    for (std::size_t j = 0; j + h <= H; ++j) {
      const auto& prev_self = t.reps[h - 1][j];
      const auto& prev_child = t.reps[h - 1][j + 1];
      auto& out_layer = t.reps[h][j];
      auto& step_layer = t.steps[h][j];
      out_layer.resize(prev_self.size());
      step_layer.resize(prev_self.size());
      for (std::size_t n = 0; n < prev_self.size(); ++n) {
        NodeStep& step = step_layer[n];
        for (std::size_t k = 0; k < K; ++k) {
          const FieldNode& child = field.layers[j + 1][n * K + k];
          if (child.relation >= p.relations.rows()) throw IdError("relation id out of range in receptive field");
          rel_vecs[k] = p.relations.row(child.relation);
          child_vecs[k] = prev_child[n * K + k].span();
        }
        if (cfg.attention == AttentionMode::influence) {
          step.attention = attention_weights(t.user_vec.span(), prev_self[n].span(), rel_vecs, child_vecs);
        }
        step.neighborhood =
            neighborhood_vector(child_vecs, step.attention.user, step.attention.entity, cfg.attention, cfg.combine);
        out_layer[n] = aggregate(prev_self[n], step.neighborhood, w, cfg.aggregator, last, cfg.leaky_slope, &step.cache);
      }
    }
  }
  t.logit = dot(t.user_vec, t.item_representation());
  t.y_hat = sigmoid(t.logit);
  return t;
}

// ---------------------------------------------------------------------------
// Gradients

struct LayerGradients {
  Mat64 W;
  Vec64 b;
  Mat64 W1;
  Mat64 W2;
};

/// Gradient structure congruent to KglnParams. Embedding tables are kept
/// sparse: only rows that took part in a forward pass appear.
struct KglnGradients {
  std::map<std::uint32_t, Vec64> users;
  std::map<std::uint32_t, Vec64> entities;
  std::map<std::uint32_t, Vec64> relations;
  std::vector<LayerGradients> layers;

  static KglnGradients zeros_like(const KglnParams& p) {
    KglnGradients g;
    g.layers.resize(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      const auto& L = p.layers[i];
      g.layers[i].W = Mat64(L.W.rows(), L.W.cols());
      g.layers[i].b = Vec64(L.b.dim());
      g.layers[i].W1 = Mat64(L.W1.rows(), L.W1.cols());
      g.layers[i].W2 = Mat64(L.W2.rows(), L.W2.cols());
    }
    return g;
  }

  static Vec64& row(std::map<std::uint32_t, Vec64>& table, std::uint32_t id, std::size_t d) {
    auto it = table.find(id);
    if (it == table.end()) it = table.emplace(id, Vec64(d)).first;
    return it->second;
  }

  void add(const KglnGradients& other) {
    auto merge = [](std::map<std::uint32_t, Vec64>& into, const std::map<std::uint32_t, Vec64>& from) {
      for (const auto& [id, v] : from) {
        auto it = into.find(id);
        if (it == into.end()) {
          into.emplace(id, v);
        } else {
          for (std::size_t i = 0; i < v.dim(); ++i) it->second[i] += v[i];
        }
      }
    };
    merge(users, other.users);
    merge(entities, other.entities);
    merge(relations, other.relations);
    if (layers.size() != other.layers.size()) throw ShapeError("gradient layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto acc = [](auto& a, const auto& b) {
        auto dst = a.flat();
        auto src = b.flat();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      };
      acc(layers[l].W, other.layers[l].W);
      acc(layers[l].W1, other.layers[l].W1);
      acc(layers[l].W2, other.layers[l].W2);
      for (std::size_t i = 0; i < layers[l].b.dim(); ++i) layers[l].b[i] += other.layers[l].b[i];
    }
  }
};

/// Accumulates into `grads` the gradient of a loss through one forward
/// pass, given dL/dlogit.
inline void backward_from_logit(const KglnParams& p, const ForwardTrace& t, double dlogit, KglnGradients& grads) {
  const auto& cfg = p.config;
  if (t.d != cfg.d || t.aggregator != cfg.aggregator || t.attention != cfg.attention || t.field.K != cfg.K ||
      t.field.H != cfg.H || t.reps.size() != cfg.H + 1) {
    throw ShapeError("backward: trace was not produced by these parameters");
  }
  if (grads.layers.size() != p.layers.size()) throw ShapeError("backward: gradient structure does not match params");
  const std::size_t H = cfg.H, K = cfg.K, d = cfg.d;
  const double scale = cfg.combine == Combine::avg ? 0.5 : 1.0;

  // d of every cached representation; same shape as t.reps.
  std::vector<std::vector<std::vector<Vec64>>> drep(H + 1);
  for (std::size_t h = 0; h <= H; ++h) {
    drep[h].resize(t.reps[h].size());
    for (std::size_t j = 0; j < t.reps[h].size(); ++j) drep[h][j].assign(t.reps[h][j].size(), Vec64(d));
  }

  Vec64 du(d);
  axpy(dlogit, t.item_representation().span(), du.span());
  axpy(dlogit, t.user_vec.span(), drep[H][0][0].span());

  for (std::size_t h = H; h >= 1; --h) {
    const LayerWeights& w = p.layer_for(h);
    LayerGradients& gw = grads.layers[p.layer_index(h)];
    const bool last = h == H;
    for (std::size_t j = 0; j + h <= H; ++j) {
      for (std::size_t n = 0; n < t.reps[h][j].size(); ++n) {
        const NodeStep& step = t.steps[h][j][n];
        const Vec64& dout = drep[h][j][n];
        const Vec64& self = t.reps[h - 1][j][n];
        Vec64& dself = drep[h - 1][j][n];
        Vec64 dvN(d);

        switch (cfg.aggregator) {
          case Aggregator::gcn: {
            const Vec64 dpre = detail::activate_backward(step.cache.pre_a, dout, last, cfg.leaky_slope);
            add_outer(gw.W, dpre.span(), step.cache.input_a.span());
            axpy(1.0, dpre.span(), gw.b.span());
            const Vec64 din = matvec_transposed(w.W, dpre.span());
            axpy(1.0, din.span(), dself.span());
            axpy(1.0, din.span(), dvN.span());
            break;
          }
          case Aggregator::graphsage: {
            const Vec64 dpre = detail::activate_backward(step.cache.pre_a, dout, last, cfg.leaky_slope);
            add_outer(gw.W, dpre.span(), step.cache.input_a.span());
            axpy(1.0, dpre.span(), gw.b.span());
            const Vec64 din = matvec_transposed(w.W, dpre.span());
            for (std::size_t i = 0; i < d; ++i) {
              dself[i] += din[i];
              dvN[i] += din[d + i];
            }
            break;
          }
          case Aggregator::bi: {
            const Vec64 dpre_a = detail::activate_backward(step.cache.pre_a, dout, last, cfg.leaky_slope);
            const Vec64 dpre_b = detail::activate_backward(step.cache.pre_b, dout, last, cfg.leaky_slope);
            add_outer(gw.W1, dpre_a.span(), step.cache.input_a.span());
            add_outer(gw.W2, dpre_b.span(), step.cache.input_b.span());
            const Vec64 dsum = matvec_transposed(w.W1, dpre_a.span());
            const Vec64 dprod = matvec_transposed(w.W2, dpre_b.span());
            for (std::size_t i = 0; i < d; ++i) {
              dself[i] += dsum[i] + dprod[i] * step.neighborhood[i];
              dvN[i] += dsum[i] + dprod[i] * self[i];
            }
            break;
          }
        }

        // Neighborhood vector and attention.
        if (cfg.attention == AttentionMode::mean) {
          for (std::size_t k = 0; k < K; ++k) axpy(1.0 / double(K), dvN.span(), drep[h - 1][j + 1][n * K + k].span());
          continue;
        }
        const auto& att = step.attention;
        std::vector<double> dweight(K);
        for (std::size_t k = 0; k < K; ++k) {
          const Vec64& child = t.reps[h - 1][j + 1][n * K + k];
          dweight[k] = scale * dot(dvN, child);
          axpy(scale * (att.user[k] + att.entity[k]), dvN.span(), drep[h - 1][j + 1][n * K + k].span());
        }
        const auto duser_scores = softmax_backward(att.user, dweight);
        const auto dentity_scores = softmax_backward(att.entity, dweight);
        for (std::size_t k = 0; k < K; ++k) {
          const FieldNode& child_node = t.field.layers[j + 1][n * K + k];
          const Vec64& child = t.reps[h - 1][j + 1][n * K + k];
          // s_user = <u, r>
          axpy(duser_scores[k], p.relations.row(child_node.relation), du.span());
          axpy(duser_scores[k], t.user_vec.span(), KglnGradients::row(grads.relations, child_node.relation, d).span());
          // s_entity = <self, child>
          axpy(dentity_scores[k], child.span(), dself.span());
          axpy(dentity_scores[k], self.span(), drep[h - 1][j + 1][n * K + k].span());
        }
      }
    }
  }

  for (std::size_t j = 0; j <= H; ++j) {
    for (std::size_t n = 0; n < t.field.layers[j].size(); ++n) {
      axpy(1.0, drep[0][j][n].span(), KglnGradients::row(grads.entities, t.field.layers[j][n].entity, d).span());
    }
  }
  axpy(1.0, du.span(), KglnGradients::row(grads.users, t.user, d).span());
}

/// Accumulates the gradient of a loss given dL/dy_hat.
inline void backward(const KglnParams& p, const ForwardTrace& t, double upstream, KglnGradients& grads) {
  backward_from_logit(p, t, sigmoid_backward(t.y_hat, upstream), grads);
}

inline KglnGradients backward(const KglnParams& p, const ForwardTrace& t, double upstream) {
  KglnGradients g = KglnGradients::zeros_like(p);
  backward(p, t, upstream, g);
  return g;
}

// ---------------------------------------------------------------------------
// Flat views, used for gradient checking and checkpoint comparison.

/// Visits every parameter tensor in a fixed order.
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn(p.users.flat());
  fn(p.entities.flat());
  fn(p.relations.flat());
  for (auto& L : p.layers) {
    fn(L.W.flat());
    fn(L.b.span());
    fn(L.W1.flat());
    fn(L.W2.flat());
  }
}

inline std::vector<float> flatten(const KglnParams& p) {
  std::vector<float> out;
  for_each_tensor(p, [&](auto s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

inline void unflatten(KglnParams& p, std::span<const float> flat) {
  std::size_t at = 0;
  for_each_tensor(p, [&](std::span<float> s) {
    if (at + s.size() > flat.size()) throw ShapeError("unflatten: vector too short");
    std::copy(flat.begin() + std::ptrdiff_t(at), flat.begin() + std::ptrdiff_t(at + s.size()), s.begin());
    at += s.size();
  });
  if (at != flat.size()) throw ShapeError("unflatten: vector too long");
}

/// Dense flat gradient in the order of flatten().
inline std::vector<double> flatten(const KglnGradients& g, const KglnParams& p) {
  std::vector<double> out;
  const std::size_t d = p.config.d;
  auto table = [&](const std::map<std::uint32_t, Vec64>& rows, std::size_t n) {
    const std::size_t base = out.size();
    out.resize(base + n * d, 0.0);
    for (const auto& [id, v] : rows)
      for (std::size_t i = 0; i < d; ++i) out[base + id * d + i] = v[i];
  };
  table(g.users, p.users.rows());
  table(g.entities, p.entities.rows());
  table(g.relations, p.relations.rows());
  for (const auto& L : g.layers) {
    out.insert(out.end(), L.W.flat().begin(), L.W.flat().end());
    out.insert(out.end(), L.b.begin(), L.b.end());
    out.insert(out.end(), L.W1.flat().begin(), L.W1.flat().end());
    out.insert(out.end(), L.W2.flat().begin(), L.W2.flat().end());
  }
  return out;
}

inline double squared_norm(const KglnParams& p) {
  double acc = 0.0;
  for_each_tensor(p, [&](std::span<const float> s) {
    for (float x : s) acc += double(x) * double(x);
  });
  return acc;
}

// ---------------------------------------------------------------------------
// Prediction

/// y_hat for one (user, item) pair with the frozen evaluation field.
inline double predict(const KglnParams& p, const KnowledgeGraph& g, const InteractionSet& data, UserId user,
                      ItemId item, std::uint64_t eval_seed) {
  Rng rng(eval_field_seed(eval_seed, user, item));
  const auto field = build_receptive_field(g, data.entity_of(item), p.config.K, p.config.H, rng);
  return forward(p, user, field).y_hat;
}

struct Recommendation {
  ItemId item = 0;
  double score = 0.0;
};

/// Candidates ranked by y_hat descending, ties by item id.
inline std::vector<Recommendation> recommend(const KglnParams& p, const KnowledgeGraph& g, const InteractionSet& data,
                                             UserId user, std::span<const ItemId> candidates, std::size_t top_k,
                                             std::uint64_t eval_seed) {
  if (user >= data.user_count || user >= p.users.rows()) throw IdError("unknown user id " + std::to_string(user));
  std::vector<Recommendation> out;
  out.reserve(candidates.size());
  for (ItemId v : candidates) {
    if (v >= data.item_count) throw IdError("unknown item id " + std::to_string(v));
    out.push_back({v, predict(p, g, data, user, v, eval_seed)});
  }
  std::sort(out.begin(), out.end(), [](const Recommendation& a, const Recommendation& b) {
    return a.score != b.score ? a.score > b.score : a.item < b.item;
  });
  if (out.size() > top_k) out.resize(top_k);
  return out;
}

}  // namespace kgln
