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

// Planted-preference corpus. Every item carries a value for each
// informative relation and for a random subset of the others; each user
// likes every item sharing one designated attribute value (plus optional
// random likes) and rates a few other items low.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgln/graph.hpp"
#include "kgln/ingest.hpp"
#include "kgln/random.hpp"

namespace kgln {

struct SyntheticSpec {
  std::size_t users = 200;
  std::size_t items = 300;
  std::size_t relations = 5;
  std::size_t values_per_relation = 40;
  /// Designated attributes are drawn from the first this-many relations.
  std::size_t informative_relations = 2;
  /// Values of each informative relation (0 = values_per_relation).
  std::size_t informative_values = 0;
  /// Attribute edges per item (0 = one per relation). Items always carry
  /// the informative relations; the rest are drawn from the others.
  std::size_t attributes_per_item = 0;
  /// Cap on planted likes per user (0 = all items with the attribute).
  std::size_t max_likes = 0;
  /// Each user also likes this many random items.
  std::size_t random_likes = 0;
  /// Random attribute-to-attribute triples (relation drawn from the
  /// non-informative ones, or any relation if all are informative). They
  /// make multi-hop neighborhoods noisy.
  std::size_t attribute_links = 0;
  /// Low ratings per user; they are dropped by the >= 4 rule.
  std::size_t low_ratings = 3;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<RawRating> ratings;
  std::unordered_map<std::string, std::string> item_map;
  KnowledgeGraph graph;
  std::vector<std::pair<RelationId, std::size_t>> user_attribute;  // by user index
};

inline std::string synthetic_item_key(std::size_t i) { return "i" + std::to_string(i); }
inline std::string synthetic_item_entity(std::size_t i) { return "item:" + std::to_string(i); }
inline std::string synthetic_attribute_entity(std::size_t r, std::size_t v) {
  return "attr:" + std::to_string(r) + ":" + std::to_string(v);
}

inline SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.items == 0 || spec.users == 0 || spec.relations == 0 || spec.values_per_relation == 0)
    throw std::invalid_argument("synthetic spec: sizes must be positive");
  if (spec.informative_relations == 0 || spec.informative_relations > spec.relations)
    throw std::invalid_argument("synthetic spec: informative_relations out of range");
  const std::size_t per_item = spec.attributes_per_item ? spec.attributes_per_item : spec.relations;
  if (per_item < spec.informative_relations || per_item > spec.relations)
    throw std::invalid_argument("synthetic spec: attributes_per_item out of range");
  const auto values_of = [&](std::size_t r) {
    return r < spec.informative_relations && spec.informative_values ? spec.informative_values : spec.values_per_relation;
  };
  Rng rng(derive_seed(spec.seed, {0x73796e7468}));

  // Which relations each item carries.
  std::vector<std::vector<std::size_t>> carriers(spec.relations);
  for (std::size_t i = 0; i < spec.items; ++i) {
    std::vector<std::size_t> rest;
    for (std::size_t r = spec.informative_relations; r < spec.relations; ++r) rest.push_back(r);
    std::shuffle(rest.begin(), rest.end(), rng);
    rest.resize(per_item - spec.informative_relations);
    for (std::size_t r = 0; r < spec.informative_relations; ++r) carriers[r].push_back(i);
    for (std::size_t r : rest) carriers[r].push_back(i);
  }

  // Balanced attribute assignment: value k % V under a shuffled carrier order.
  constexpr std::size_t kNone = std::size_t(-1);
  std::vector<std::vector<std::size_t>> value_of(spec.relations, std::vector<std::size_t>(spec.items, kNone));
  std::vector<std::vector<std::vector<std::size_t>>> holders(
      spec.relations, std::vector<std::vector<std::size_t>>(spec.values_per_relation));
  for (std::size_t r = 0; r < spec.relations; ++r) {
    holders[r].resize(values_of(r));
    std::vector<std::size_t> order = carriers[r];
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t v = k % values_of(r);
      value_of[r][order[k]] = v;
      holders[r][v].push_back(order[k]);
    }
    for (auto& h : holders[r]) std::sort(h.begin(), h.end());
  }

  SyntheticCorpus out;
  GraphBuilder b;
  for (std::size_t i = 0; i < spec.items; ++i) b.add_entity(synthetic_item_entity(i));
  for (std::size_t r = 0; r < spec.relations; ++r)
    for (std::size_t v = 0; v < values_of(r); ++v) b.add_entity(synthetic_attribute_entity(r, v));
  for (std::size_t r = 0; r < spec.relations; ++r) b.add_relation("rel:" + std::to_string(r));
  for (std::size_t i = 0; i < spec.items; ++i)
    for (std::size_t r = 0; r < spec.relations; ++r)
      if (value_of[r][i] != kNone)
        b.add_triple(synthetic_item_entity(i), "rel:" + std::to_string(r),
                   synthetic_attribute_entity(r, value_of[r][i]));
  for (std::size_t k = 0; k < spec.attribute_links; ++k) {
    const std::size_t noisy = spec.relations - spec.informative_relations;
    const std::size_t r = noisy ? spec.informative_relations + uniform_index(rng, noisy) : uniform_index(rng, spec.relations);
    const std::size_t ra = uniform_index(rng, spec.relations), rb = uniform_index(rng, spec.relations);
    b.add_triple(synthetic_attribute_entity(ra, uniform_index(rng, values_of(ra))), "rel:" + std::to_string(r),
                 synthetic_attribute_entity(rb, uniform_index(rng, values_of(rb))));
  }
  out.graph = std::move(b).build();
  for (std::size_t i = 0; i < spec.items; ++i) out.item_map[synthetic_item_key(i)] = synthetic_item_entity(i);

  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::string user = "u" + std::to_string(u);
    const auto r = RelationId(uniform_index(rng, spec.informative_relations));
    const std::size_t v = uniform_index(rng, values_of(r));
    out.user_attribute.emplace_back(r, v);
    std::vector<std::size_t> likes = holders[r][v];
    std::shuffle(likes.begin(), likes.end(), rng);
    if (spec.max_likes && likes.size() > spec.max_likes) likes.resize(spec.max_likes);
    for (std::size_t k = 0; k < spec.random_likes; ++k) likes.push_back(uniform_index(rng, spec.items));
    std::sort(likes.begin(), likes.end());
    likes.erase(std::unique(likes.begin(), likes.end()), likes.end());
    for (std::size_t i : likes) out.ratings.push_back({user, synthetic_item_key(i), 5.0});
    for (std::size_t k = 0; k < spec.low_ratings; ++k) {
      const std::size_t i = uniform_index(rng, spec.items);
      if (!std::binary_search(likes.begin(), likes.end(), i))
        out.ratings.push_back({user, synthetic_item_key(i), double(1 + uniform_index(rng, 3))});
    }
  }
  return out;
}

/// Ratings in MovieLens `user::item::rating::timestamp` form.
inline void write_movielens_ratings(std::ostream& out, std::span<const RawRating> ratings) {
  std::size_t ts = 978300000;
  for (const auto& r : ratings) out << r.user << "::" << r.item << "::" << format_number(r.rating) << "::" << ts++ << '\n';
}

inline void write_item_map(std::ostream& out, const std::unordered_map<std::string, std::string>& m) {
  std::vector<std::pair<std::string, std::string>> rows(m.begin(), m.end());
  std::sort(rows.begin(), rows.end());
  for (const auto& [k, v] : rows) out << k << '\t' << v << '\n';
}

}  // namespace kgln
