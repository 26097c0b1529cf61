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

// Rating logs -> implicit-feedback interaction sets.
//
// The pipeline is: parse ratings, implicitize (rating -> positive),
// align items to KG entities (dropping what cannot be matched), draw an
// equal number of negatives per user, then split 6:2:2 stratified by label.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgln/errors.hpp"
#include "kgln/graph.hpp"
#include "kgln/random.hpp"
#include "kgln/text.hpp"

namespace kgln {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct RawRating {
  std::string user;
  std::string item;
  double rating = 0.0;
};

struct RatingsLoad {
  std::vector<RawRating> ratings;
  std::size_t malformed = 0;
  std::size_t header_lines = 0;
  /// Line numbers of the first few malformed lines, for reporting.
  std::vector<std::size_t> malformed_examples;

  void note_malformed(std::size_t line) {
    ++malformed;
    if (malformed_examples.size() < 10) malformed_examples.push_back(line);
  }
};

/// `user::item::rating::timestamp`
inline RatingsLoad load_movielens_ratings(std::istream& in) {
  if (!in) throw ParseError("ratings stream is not readable");
  RatingsLoad out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = strip_cr(line);
    if (trim(view).empty()) continue;
    const auto f = split_fields(view, std::string_view("::"));
    if (f.size() != 4 || f[0].empty() || f[1].empty()) {
      out.note_malformed(lineno);
      continue;
    }
    const auto rating = parse_number<double>(f[2]);
    if (!rating || !std::isfinite(*rating)) {
      out.note_malformed(lineno);
      continue;
    }
    out.ratings.push_back({std::string(f[0]), std::string(f[1]), *rating});
  }
  if (in.bad()) throw ParseError("failed reading ratings stream");
  return out;
}

namespace detail {
// Semicolon-separated fields, each optionally wrapped in double quotes
// (a doubled quote inside a quoted field is a literal quote).
inline std::optional<std::vector<std::string>> split_quoted(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (true) {
    std::string field;
    if (i < s.size() && s[i] == '"') {
      ++i;
      bool closed = false;
      while (i < s.size()) {
        if (s[i] == '"') {
          if (i + 1 < s.size() && s[i + 1] == '"') {
            field.push_back('"');
            i += 2;
            continue;
          }
          closed = true;
          ++i;
          break;
        }
        field.push_back(s[i++]);
      }
      if (!closed) return std::nullopt;
      if (i < s.size() && s[i] != sep) return std::nullopt;
    } else {
      while (i < s.size() && s[i] != sep) field.push_back(s[i++]);
    }
    out.push_back(std::move(field));
    if (i >= s.size()) return out;
    ++i;  // separator
  }
}
}  // namespace detail

/// `"user";"item";"rating"` with one header line.
inline RatingsLoad load_bookcrossing_ratings(std::istream& in) {
  if (!in) throw ParseError("ratings stream is not readable");
  RatingsLoad out;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = strip_cr(line);
    if (trim(view).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      ++out.header_lines;
      continue;
    }
    const auto f = detail::split_quoted(view, ';');
    if (!f || f->size() != 3 || trim((*f)[0]).empty() || trim((*f)[1]).empty()) {
      out.note_malformed(lineno);
      continue;
    }
    const auto rating = parse_number<double>((*f)[2]);
    if (!rating || !std::isfinite(*rating)) {
      out.note_malformed(lineno);
      continue;
    }
    out.ratings.push_back({std::string(trim((*f)[0])), std::string(trim((*f)[1])), *rating});
  }
  if (in.bad()) throw ParseError("failed reading ratings stream");
  return out;
}

/// `item_key<TAB>entity_key` per line.
inline std::unordered_map<std::string, std::string> load_item_map(std::istream& in) {
  std::unordered_map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = strip_cr(line);
    if (view.empty() || view.front() == '#') continue;
    const auto f = split_fields(view, '\t');
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw ParseError("malformed item map line: expected item_key<TAB>entity_key", lineno);
    }
    out.emplace(std::string(f[0]), std::string(f[1]));
  }
  return out;
}

// ---------------------------------------------------------------------------

enum class PositiveRule { threshold, any_rating };

struct DatasetRecipe {
  PositiveRule rule = PositiveRule::threshold;
  double threshold = 4.0;
  std::array<double, 3> split_ratio{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;

  void validate() const {
    if (rule == PositiveRule::threshold && !std::isfinite(threshold)) {
      throw std::invalid_argument("recipe: threshold must be finite");
    }
    double total = 0.0;
    for (double r : split_ratio) {
      if (!(r >= 0.0)) throw std::invalid_argument("recipe: split ratios must be non-negative");
      total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("recipe: split ratios must sum to 1");
  }

  static DatasetRecipe movielens(std::uint64_t seed = 0) { return {PositiveRule::threshold, 4.0, {0.6, 0.2, 0.2}, seed}; }
  static DatasetRecipe bookcrossing(std::uint64_t seed = 0) {
    return {PositiveRule::any_rating, 0.0, {0.6, 0.2, 0.2}, seed};
  }
};

struct KeyPair {
  std::string user;
  std::string item;
  friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

/// Ratings -> positive (user, item) key pairs. Repeated pairs keep their
/// first occurrence.
inline std::vector<KeyPair> implicitize(std::span<const RawRating> ratings, const DatasetRecipe& recipe) {
  recipe.validate();
  std::vector<KeyPair> out;
  std::unordered_set<std::string> seen;
  for (const RawRating& r : ratings) {
    if (recipe.rule == PositiveRule::threshold && !(r.rating >= recipe.threshold)) continue;
    std::string key = r.user;
    key.push_back('\0');
    key += r.item;
    if (!seen.insert(std::move(key)).second) continue;
    out.push_back({r.user, r.item});
  }
  return out;
}

struct DropReport {
  std::size_t input_records = 0;
  std::size_t dropped_records = 0;
  std::size_t dropped_items = 0;
  std::size_t dropped_users = 0;
  std::size_t unmapped_items = 0;    // no item-map entry
  std::size_t missing_entities = 0;  // mapped to an entity absent from the KG
};

struct AlignedPositives {
  Vocabulary users;
  Vocabulary items;
  std::vector<EntityId> item_entity;  // indexed by item id
  std::vector<std::pair<UserId, ItemId>> pairs;
  DropReport report;
};

/// Keeps only records whose item maps to an entity of `kg`, and re-indexes
/// surviving users and items densely in first-appearance order.
inline AlignedPositives align_items(std::span<const KeyPair> positives,
                                    const std::unordered_map<std::string, std::string>& item_map,
                                    const KnowledgeGraph& kg) {
  AlignedPositives out;
  out.report.input_records = positives.size();
  std::unordered_set<std::string> all_users;
  std::unordered_set<std::string> unmapped;
  std::unordered_set<std::string> missing;
  for (const KeyPair& p : positives) {
    all_users.insert(p.user);
    auto it = item_map.find(p.item);
    if (it == item_map.end()) {
      unmapped.insert(p.item);
      ++out.report.dropped_records;
      continue;
    }
    const auto entity = kg.entities().find(it->second);
    if (!entity) {
      missing.insert(p.item);
      ++out.report.dropped_records;
      continue;
    }
    const UserId u = out.users.intern(p.user);
    const std::size_t before = out.items.size();
    const ItemId v = out.items.intern(p.item);
    if (out.items.size() != before) out.item_entity.push_back(*entity);
    out.pairs.emplace_back(u, v);
  }
  out.report.unmapped_items = unmapped.size();
  out.report.missing_entities = missing.size();
  out.report.dropped_items = unmapped.size() + missing.size();
  out.report.dropped_users = all_users.size() - out.users.size();
  return out;
}

/// Draws `count` distinct items uniformly from [0, item_count) \ excluded.
template <class Engine>
std::vector<ItemId> draw_negatives(const std::unordered_set<ItemId>& excluded, std::size_t item_count,
                                   std::size_t count, Engine& rng) {
  const std::size_t available = item_count - std::min(item_count, excluded.size());
  if (count > available) {
    throw DataError("cannot draw " + std::to_string(count) + " negatives: only " + std::to_string(available) +
                    " non-positive items");
  }
  std::vector<ItemId> out;
  out.reserve(count);
  if (count * 4 <= available) {
    // Sparse case: rejection sampling.
    std::unordered_set<ItemId> taken;
    while (out.size() < count) {
      const auto v = ItemId(uniform_index(rng, item_count));
      if (excluded.count(v) || !taken.insert(v).second) continue;
      out.push_back(v);
    }
  } else {
    std::vector<ItemId> pool;
    pool.reserve(available);
    for (ItemId v = 0; v < item_count; ++v)
      if (!excluded.count(v)) pool.push_back(v);
    std::shuffle(pool.begin(), pool.end(), rng);
    out.assign(pool.begin(), pool.begin() + std::ptrdiff_t(count));
  }
  return out;
}

/// Positive item sets per user.
inline std::vector<std::unordered_set<ItemId>> group_by_user(std::span<const std::pair<UserId, ItemId>> pairs,
                                                            std::size_t user_count) {
  std::vector<std::unordered_set<ItemId>> out(user_count);
  for (const auto& [u, v] : pairs) out.at(u).insert(v);
  return out;
}

/// For every user, as many negatives as positives, drawn uniformly without
/// replacement from the items the user has no positive for. Each user gets
/// its own stream derived from `seed`.
inline std::vector<std::pair<UserId, ItemId>> sample_dataset_negatives(
    std::span<const std::pair<UserId, ItemId>> positives, std::size_t item_count, std::uint64_t seed) {
  std::size_t user_count = 0;
  for (const auto& [u, v] : positives) user_count = std::max<std::size_t>(user_count, u + 1);
  const auto by_user = group_by_user(positives, user_count);
  std::vector<std::pair<UserId, ItemId>> out;
  out.reserve(positives.size());
  for (UserId u = 0; u < user_count; ++u) {
    const auto& pos = by_user[u];
    if (pos.empty()) continue;
    if (pos.size() >= item_count) {
      throw DataError("user " + std::to_string(u) + " has positives for the entire item vocabulary");
    }
    Rng rng(derive_seed(seed, {0x6e65, u}));
    std::vector<ItemId> negs;
    try {
      negs = draw_negatives(pos, item_count, pos.size(), rng);
    } catch (const DataError& e) {
      throw DataError("user " + std::to_string(u) + ": " + e.what());
    }
    std::sort(negs.begin(), negs.end());
    for (ItemId v : negs) out.emplace_back(u, v);
  }
  return out;
}

// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::uint8_t label = 0;
  Split split = Split::train;
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct LabeledPair {
  UserId user = 0;
  ItemId item = 0;
  std::uint8_t label = 0;
};

/// Labeled (user, item) records with split assignment and the item -> KG
/// entity alignment.
struct InteractionSet {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::vector<Interaction> records;
  std::vector<EntityId> item_to_entity;
  std::vector<std::string> user_keys;
  std::vector<std::string> item_keys;

  std::vector<Interaction> in_split(Split s) const {
    std::vector<Interaction> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(r);
    return out;
  }

  std::vector<std::pair<UserId, ItemId>> positives(Split s) const {
    std::vector<std::pair<UserId, ItemId>> out;
    for (const auto& r : records)
      if (r.split == s && r.label == 1) out.emplace_back(r.user, r.item);
    return out;
  }

  EntityId entity_of(ItemId v) const {
    if (v >= item_to_entity.size()) throw IdError("item id " + std::to_string(v) + " out of range");
    return item_to_entity[v];
  }
};

/// Largest-remainder apportionment of n over the ratios.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratio) {
  std::array<std::size_t, 3> count{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = double(n) * ratio[i];
    count[i] = std::size_t(std::floor(exact + 1e-9));
    frac[i] = exact - double(count[i]);
    assigned += count[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (frac[i] > frac[best] + 1e-12) best = i;
    ++count[best];
    frac[best] = -1.0;
    ++assigned;
  }
  while (assigned > n) {  // only reachable through floating-point slop
    for (std::size_t i = 3; i-- > 0;)
      if (count[i] > 0 && assigned > n) {
        --count[i];
        --assigned;
      }
  }
  return count;
}

/// Stratified random split: totals per split follow the ratio to within one
/// record, and positives follow it independently.
inline std::vector<Interaction> split_records(std::span<const LabeledPair> records, const DatasetRecipe& recipe) {
  recipe.validate();
  if (records.size() < 5) {
    throw DataError("split: need at least 5 records, got " + std::to_string(records.size()));
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < records.size(); ++i) (records[i].label ? pos : neg).push_back(i);

  const auto total = apportion(records.size(), recipe.split_ratio);
  const auto pos_counts = apportion(pos.size(), recipe.split_ratio);
  std::array<long long, 3> neg_counts{};
  for (std::size_t s = 0; s < 3; ++s) neg_counts[s] = (long long)total[s] - (long long)pos_counts[s];
  // Repair the rare case where a split's total is smaller than its positives.
  for (std::size_t s = 0; s < 3; ++s) {
    while (neg_counts[s] < 0) {
      const auto donor = std::size_t(std::max_element(neg_counts.begin(), neg_counts.end()) - neg_counts.begin());
      --neg_counts[donor];
      ++neg_counts[s];
    }
  }

  Rng pos_rng(derive_seed(recipe.seed, {0x73706c, 1}));
  Rng neg_rng(derive_seed(recipe.seed, {0x73706c, 0}));
  std::shuffle(pos.begin(), pos.end(), pos_rng);
  std::shuffle(neg.begin(), neg.end(), neg_rng);

  std::vector<Interaction> out(records.size());
  auto assign = [&](const std::vector<std::size_t>& idx, auto counts) {
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (long long k = 0; k < (long long)counts[s]; ++k, ++cursor) {
        const auto& r = records[idx[cursor]];
        out[idx[cursor]] = {r.user, r.item, r.label, Split(s)};
      }
    }
  };
  assign(pos, pos_counts);
  assign(neg, neg_counts);
  return out;
}

struct PreparedDataset {
  InteractionSet data;
  DropReport drops;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// The full ingest pipeline. Records come out stable-sorted by
/// (user, item).
inline PreparedDataset prepare_dataset(std::span<const RawRating> ratings,
                                       const std::unordered_map<std::string, std::string>& item_map,
                                       const KnowledgeGraph& kg, const DatasetRecipe& recipe) {
  recipe.validate();
  const auto positives = implicitize(ratings, recipe);
  AlignedPositives aligned = align_items(positives, item_map, kg);
  if (aligned.pairs.empty()) throw DataError("no records survive item-entity alignment");

  const auto negatives = sample_dataset_negatives(aligned.pairs, aligned.items.size(), recipe.seed);

  std::vector<LabeledPair> labeled;
  labeled.reserve(aligned.pairs.size() + negatives.size());
  for (const auto& [u, v] : aligned.pairs) labeled.push_back({u, v, 1});
  for (const auto& [u, v] : negatives) labeled.push_back({u, v, 0});

  PreparedDataset out;
  out.drops = aligned.report;
  out.positives = aligned.pairs.size();
  out.negatives = negatives.size();
  auto& d = out.data;
  d.records = split_records(labeled, recipe);
  std::stable_sort(d.records.begin(), d.records.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });
  d.user_count = aligned.users.size();
  d.item_count = aligned.items.size();
  d.item_to_entity = aligned.item_entity;
  d.user_keys = aligned.users.names();
  d.item_keys = aligned.items.names();
  return out;
}

}  // namespace kgln
