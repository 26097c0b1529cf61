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

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgln/errors.hpp"
#include "kgln/random.hpp"
#include "kgln/text.hpp"

namespace kgln {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    return mix64((std::uint64_t(t.head) << 32 | t.tail) ^ mix64(t.relation));
  }
};

/// One adjacency entry: the neighbor reached and the relation on the edge.
struct Edge {
  RelationId relation = 0;
  EntityId entity = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Dense string <-> id mapping, ids in first-appearance order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    index_.emplace(names_.back(), id);
    return id;
  }
  std::optional<std::uint32_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& name(std::uint32_t id) const {
    if (id >= names_.size()) throw IdError("vocabulary id " + std::to_string(id) + " out of range");
    return names_[id];
  }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

inline constexpr std::string_view kSelfRelationName = "self";

/// Immutable knowledge graph with symmetric, relation-typed adjacency.
///
/// Every triple (h, r, t) contributes (r, t) to N(h) and (r, h) to N(t).
/// Entities left without any neighbor get a single self-loop through the
/// `self` relation; that relation is only added to the vocabulary when
/// needed and then takes the next free relation id.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  KnowledgeGraph(Vocabulary entities, Vocabulary relations, std::vector<Triple> triples)
      : entities_(std::move(entities)), relations_(std::move(relations)), triples_(std::move(triples)) {
    build();
  }

  std::size_t entity_count() const noexcept { return entities_.size(); }
  std::size_t relation_count() const noexcept { return relations_.size(); }
  std::span<const Triple> triples() const noexcept { return triples_; }
  const Vocabulary& entities() const noexcept { return entities_; }
  const Vocabulary& relations() const noexcept { return relations_; }
  std::optional<RelationId> self_relation() const noexcept { return self_relation_; }

  /// Sorted by (relation, entity).
  std::span<const Edge> neighbors(EntityId v) const {
    check_entity(v);
    return adjacency_[v];
  }

  bool contains(const Triple& t) const { return triple_set_.count(t) != 0; }

  void check_entity(EntityId v) const {
    if (v >= entity_count()) {
      throw IdError("entity id " + std::to_string(v) + " out of range (entity_count " +
                    std::to_string(entity_count()) + ")");
    }
  }
  void check_relation(RelationId r) const {
    if (r >= relation_count()) {
      throw IdError("relation id " + std::to_string(r) + " out of range (relation_count " +
                    std::to_string(relation_count()) + ")");
    }
  }

  /// New graph with `extra` appended (duplicates of existing triples ignored).
  KnowledgeGraph with_added_triples(std::span<const Triple> extra) const {
    std::vector<Triple> all = triples_;
    std::unordered_set<Triple, TripleHash> seen = triple_set_;
    for (const Triple& t : extra) {
      check_entity(t.head);
      check_entity(t.tail);
      check_relation(t.relation);
      if (seen.insert(t).second) all.push_back(t);
    }
    return KnowledgeGraph(entities_, relations_without_synthetic_self(), std::move(all));
  }

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.entities_ == b.entities_ && a.relations_ == b.relations_ && a.triples_ == b.triples_ &&
           a.adjacency_ == b.adjacency_;
  }

 private:
  void build() {
    std::vector<Triple> unique;
    unique.reserve(triples_.size());
    for (const Triple& t : triples_) {
      check_entity(t.head);
      check_entity(t.tail);
      check_relation(t.relation);
      if (triple_set_.insert(t).second) unique.push_back(t);
    }
    triples_ = std::move(unique);

    adjacency_.assign(entity_count(), {});
    for (const Triple& t : triples_) {
      adjacency_[t.head].push_back({t.relation, t.tail});
      if (t.tail != t.head) adjacency_[t.tail].push_back({t.relation, t.head});
    }
    for (EntityId v = 0; v < adjacency_.size(); ++v) {
      if (adjacency_[v].empty()) {
        if (!self_relation_) self_relation_ = relations_.intern(kSelfRelationName);
        adjacency_[v].push_back({*self_relation_, v});
      }
    }
    if (!self_relation_) self_relation_ = relations_.find(kSelfRelationName);
    synthetic_self_ = self_relation_ && std::none_of(triples_.begin(), triples_.end(), [&](const Triple& t) {
                        return t.relation == *self_relation_;
                      }) && self_relation_ == relation_count() - 1;
    for (auto& list : adjacency_) std::sort(list.begin(), list.end());
  }

  // When the self relation was appended only to serve self-loops, a rebuilt
  // graph may no longer need it.
  Vocabulary relations_without_synthetic_self() const {
    if (!synthetic_self_) return relations_;
    Vocabulary out;
    for (std::size_t i = 0; i + 1 < relations_.size(); ++i) out.intern(relations_.name(std::uint32_t(i)));
    return out;
  }

  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
  std::unordered_set<Triple, TripleHash> triple_set_;
  std::vector<std::vector<Edge>> adjacency_;
  std::optional<RelationId> self_relation_;
  bool synthetic_self_ = false;
};

/// Accumulates named triples and standalone entities.
class GraphBuilder {
 public:
  EntityId add_entity(std::string_view name) { return entities_.intern(name); }
  RelationId add_relation(std::string_view name) { return relations_.intern(name); }
  void add_triple(std::string_view head, std::string_view relation, std::string_view tail) {
    const EntityId h = entities_.intern(head);
    const RelationId r = relations_.intern(relation);
    const EntityId t = entities_.intern(tail);
    triples_.push_back({h, r, t});
  }
  std::size_t lines_added() const noexcept { return triples_.size(); }
  KnowledgeGraph build() && { return KnowledgeGraph(std::move(entities_), std::move(relations_), std::move(triples_)); }

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
};

struct TripleLoadStats {
  std::size_t lines_read = 0;
  std::size_t triples = 0;
  std::size_t duplicates = 0;
};

/// Reads TAB-separated `head relation tail` lines. Blank lines and lines
/// starting with '#' are skipped; any other line must have exactly three
/// non-empty fields.
inline KnowledgeGraph load_triples(std::istream& in, TripleLoadStats* stats = nullptr) {
  GraphBuilder builder;
  std::string line;
  std::size_t lineno = 0;
  std::size_t read = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = strip_cr(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = split_fields(view, '\t');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw ParseError("malformed triple: expected head<TAB>relation<TAB>tail, got " +
                           std::to_string(fields.size()) + " field(s)",
                       lineno);
    }
    builder.add_triple(fields[0], fields[1], fields[2]);
    ++read;
  }
  if (in.bad()) throw ParseError("failed reading triple stream");
  KnowledgeGraph g = std::move(builder).build();
  if (stats) {
    stats->lines_read = read;
    stats->triples = g.triples().size();
    stats->duplicates = read - g.triples().size();
  }
  return g;
}

/// Inverse of load_triples for graphs without isolated entities.
inline void write_triples(std::ostream& out, const KnowledgeGraph& g) {
  for (const Triple& t : g.triples()) {
    out << g.entities().name(t.head) << '\t' << g.relations().name(t.relation) << '\t' << g.entities().name(t.tail)
        << '\n';
  }
}

/// K neighbors of `center`, drawn uniformly with replacement from N(center).
struct NeighborSample {
  EntityId center = 0;
  std::vector<Edge> entries;
};

template <class Engine>
NeighborSample sample_neighbors(const KnowledgeGraph& g, EntityId v, std::size_t k, Engine& rng) {
  if (k == 0) throw std::invalid_argument("sample_neighbors: k must be >= 1");
  const auto adj = g.neighbors(v);
  NeighborSample s{v, {}};
  s.entries.reserve(k);
  for (std::size_t i = 0; i < k; ++i) s.entries.push_back(adj[uniform_index(rng, adj.size())]);
  return s;
}

// ---------------------------------------------------------------------------
// Binary cache: "KGLN", u32 version, u32 entity_count, u32 relation_count,
// u32 triple_count, triple_count x (u32 head, u32 relation, u32 tail), then
// entity and relation names as (u32 length, bytes). All little-endian.

inline constexpr char kGraphMagic[4] = {'K', 'G', 'L', 'N'};
inline constexpr std::uint32_t kGraphFormatVersion = 1;

inline void save_graph_binary(std::ostream& out, const KnowledgeGraph& g) {
  out.write(kGraphMagic, 4);
  write_u32(out, kGraphFormatVersion);
  write_u32(out, std::uint32_t(g.entity_count()));
  write_u32(out, std::uint32_t(g.relation_count()));
  write_u32(out, std::uint32_t(g.triples().size()));
  for (const Triple& t : g.triples()) {
    write_u32(out, t.head);
    write_u32(out, t.relation);
    write_u32(out, t.tail);
  }
  for (const auto* vocab : {&g.entities(), &g.relations()}) {
    for (const std::string& name : vocab->names()) {
      write_u32(out, std::uint32_t(name.size()));
      out.write(name.data(), std::streamsize(name.size()));
    }
  }
  if (!out) throw std::runtime_error("failed writing graph cache");
}

inline KnowledgeGraph load_graph_binary(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kGraphMagic, 4) != 0) throw ParseError("graph cache: bad magic");
  const std::uint32_t version = read_u32(in);
  if (version != kGraphFormatVersion) throw ParseError("graph cache: unsupported version " + std::to_string(version));
  const std::uint32_t n_entities = read_u32(in);
  const std::uint32_t n_relations = read_u32(in);
  const std::uint32_t n_triples = read_u32(in);
  std::vector<Triple> triples(n_triples);
  for (auto& t : triples) {
    t.head = read_u32(in);
    t.relation = read_u32(in);
    t.tail = read_u32(in);
  }
  auto read_vocab = [&](std::uint32_t n) {
    Vocabulary v;
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t len = read_u32(in);
      std::string name(len, '\0');
      if (!in.read(name.data(), len)) throw ParseError("graph cache: truncated name table");
      v.intern(name);
    }
    return v;
  };
  Vocabulary entities = read_vocab(n_entities);
  Vocabulary relations = read_vocab(n_relations);
  return KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples));
}

}  // namespace kgln
