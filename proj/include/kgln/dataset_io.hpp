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

// On-disk prepared dataset. A directory holding
//
//   interactions.tsv  user_id item_id label split
//   users.tsv         user_id user_key
//   items.tsv         item_id item_key entity_key
//   kg.tsv            head relation tail (plain triple file, no header)
//
// The other files start with a header row; ids are the dense re-indexed
// ids.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>

#include "kgln/errors.hpp"
#include "kgln/graph.hpp"
#include "kgln/ingest.hpp"
#include "kgln/text.hpp"

namespace kgln {

inline constexpr const char* kInteractionsFile = "interactions.tsv";
inline constexpr const char* kUsersFile = "users.tsv";
inline constexpr const char* kItemsFile = "items.tsv";
inline constexpr const char* kGraphFile = "kg.tsv";

struct LoadedDataset {
  KnowledgeGraph graph;
  InteractionSet data;
};

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}
inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot read " + p.string());
  return in;
}

// Reads a headed TSV, checking the header and the field count.
template <class F>
void read_table(const std::filesystem::path& p, std::string_view header, std::size_t fields, F&& on_row) {
  auto in = open_in(p);
  std::string raw;
  std::size_t lineno = 0;
  if (!std::getline(in, raw) || strip_cr(raw) != header) throw ParseError(p.string() + ": bad header", 1);
  ++lineno;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto f = split_fields(line, '\t');
    if (f.size() != fields) throw ParseError(p.string() + ": expected " + std::to_string(fields) + " fields", lineno);
    on_row(f, lineno);
  }
}

template <class T>
T field_number(std::string_view s, const std::filesystem::path& p, std::size_t lineno) {
  const auto v = parse_number<T>(s);
  if (!v) throw ParseError(p.string() + ": bad number '" + std::string(s) + "'", lineno);
  return *v;
}
}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const KnowledgeGraph& g, const InteractionSet& d) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / kInteractionsFile);
    out << "user_id\titem_id\tlabel\tsplit\n";
    for (const auto& r : d.records)
      out << r.user << '\t' << r.item << '\t' << int(r.label) << '\t' << split_name(r.split) << '\n';
  }
  {
    auto out = detail::open_out(dir / kUsersFile);
    out << "user_id\tuser_key\n";
    for (std::size_t u = 0; u < d.user_keys.size(); ++u) out << u << '\t' << d.user_keys[u] << '\n';
  }
  {
    auto out = detail::open_out(dir / kItemsFile);
    out << "item_id\titem_key\tentity_key\n";
    for (std::size_t v = 0; v < d.item_keys.size(); ++v)
      out << v << '\t' << d.item_keys[v] << '\t' << g.entities().name(d.item_to_entity[v]) << '\n';
  }
  {
    auto out = detail::open_out(dir / kGraphFile);
    write_triples(out, g);
  }
}

/// Reads a prepared dataset. `graph_override`, when set, replaces kg.tsv
/// (e.g. a completed graph); items are resolved to entities by name.
inline LoadedDataset load_dataset(const std::filesystem::path& dir,
                                  const std::filesystem::path& graph_override = {}) {
  LoadedDataset out;
  {
    const auto gp = graph_override.empty() ? dir / kGraphFile : graph_override;
    auto in = detail::open_in(gp);
    out.graph = load_triples(in);
  }
  auto& d = out.data;
  detail::read_table(dir / kUsersFile, "user_id\tuser_key", 2, [&](const auto& f, std::size_t ln) {
    if (detail::field_number<std::size_t>(f[0], dir / kUsersFile, ln) != d.user_keys.size())
      throw ParseError("users.tsv: ids must be dense and ordered", ln);
    d.user_keys.emplace_back(f[1]);
  });
  detail::read_table(dir / kItemsFile, "item_id\titem_key\tentity_key", 3, [&](const auto& f, std::size_t ln) {
    if (detail::field_number<std::size_t>(f[0], dir / kItemsFile, ln) != d.item_keys.size())
      throw ParseError("items.tsv: ids must be dense and ordered", ln);
    const auto e = out.graph.entities().find(f[2]);
    if (!e) throw DataError("items.tsv line " + std::to_string(ln) + ": entity '" + std::string(f[2]) + "' not in graph");
    d.item_keys.emplace_back(f[1]);
    d.item_to_entity.push_back(*e);
  });
  d.user_count = d.user_keys.size();
  d.item_count = d.item_keys.size();
  const auto ip = dir / kInteractionsFile;
  detail::read_table(ip, "user_id\titem_id\tlabel\tsplit", 4, [&](const auto& f, std::size_t ln) {
    Interaction r;
    r.user = detail::field_number<UserId>(f[0], ip, ln);
    r.item = detail::field_number<ItemId>(f[1], ip, ln);
    const auto label = detail::field_number<int>(f[2], ip, ln);
    const auto split = parse_split(f[3]);
    if ((label != 0 && label != 1) || !split) throw ParseError(ip.string() + ": bad label or split", ln);
    if (r.user >= d.user_count || r.item >= d.item_count) throw ParseError(ip.string() + ": id out of range", ln);
    r.label = std::uint8_t(label);
    r.split = *split;
    d.records.push_back(r);
  });
  if (d.records.empty()) throw DataError("prepared dataset " + dir.string() + " has no interactions");
  return out;
}

}  // namespace kgln
