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

// Checkpoint layout (little-endian):
//
//   "KGCP"  u32 version  u32 section_count
//   section_count x { u16 name_len, name bytes, u32 rows, u32 cols,
//                     rows*cols f32 row-major }
//
// KGLN sections: user_table, entity_table, relation_table and
// agg.<layer>.<W|b|W1|W2> (layer is 1-based; biases are d x 1).

#pragma once

#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "kgln/errors.hpp"
#include "kgln/model.hpp"
#include "kgln/tensor.hpp"
#include "kgln/text.hpp"

namespace kgln {

inline constexpr char kCheckpointMagic[4] = {'K', 'G', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedMatrix {
  std::string name;
  DenseMatrix value;
};

inline void write_sections(std::ostream& out, const std::vector<NamedMatrix>& sections) {
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, std::uint32_t(sections.size()));
  for (const auto& s : sections) {
    if (s.name.size() > 0xffff) throw std::invalid_argument("checkpoint section name too long");
    write_u16(out, std::uint16_t(s.name.size()));
    out.write(s.name.data(), std::streamsize(s.name.size()));
    write_u32(out, std::uint32_t(s.value.rows()));
    write_u32(out, std::uint32_t(s.value.cols()));
    for (float x : s.value.flat()) write_f32(out, x);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

inline std::vector<NamedMatrix> read_sections(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw ParseError("checkpoint: bad magic");
  const auto version = read_u32(in);
  if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = read_u32(in);
  std::vector<NamedMatrix> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedMatrix s;
    s.name.resize(read_u16(in));
    if (!in.read(s.name.data(), std::streamsize(s.name.size()))) throw ParseError("checkpoint: truncated name");
    const auto rows = read_u32(in);
    const auto cols = read_u32(in);
    std::vector<float> data(std::size_t(rows) * cols);
    for (float& x : data) x = read_f32(in);
    s.value = DenseMatrix(rows, cols, std::move(data));
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {
inline DenseMatrix column(const DenseVector& v) { return DenseMatrix(v.dim(), 1, v.values()); }
}  // namespace detail

inline std::vector<NamedMatrix> to_sections(const KglnParams& p) {
  std::vector<NamedMatrix> s = {{"user_table", p.users}, {"entity_table", p.entities}, {"relation_table", p.relations}};
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string prefix = "agg." + std::to_string(l + 1) + ".";
    const auto& L = p.layers[l];
    switch (p.config.aggregator) {
      case Aggregator::gcn:
      case Aggregator::graphsage:
        s.push_back({prefix + "W", L.W});
        s.push_back({prefix + "b", detail::column(L.b)});
        break;
      case Aggregator::bi:
        s.push_back({prefix + "W1", L.W1});
        s.push_back({prefix + "W2", L.W2});
        break;
    }
  }
  return s;
}

inline void save_checkpoint(std::ostream& out, const KglnParams& p) { write_sections(out, to_sections(p)); }

/// Shapes a checkpoint must have for a model config and vocabulary sizes.
inline std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> expected_shapes(
    const ModelConfig& cfg, std::size_t n_users, std::size_t n_entities, std::size_t n_relations) {
  KglnParams shape_only;
  shape_only.config = cfg;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out = {
      {"user_table", {n_users, cfg.d}}, {"entity_table", {n_entities, cfg.d}}, {"relation_table", {n_relations, cfg.d}}};
  for (std::size_t l = 0; l < cfg.layer_count(); ++l) {
    const std::string prefix = "agg." + std::to_string(l + 1) + ".";
    switch (cfg.aggregator) {
      case Aggregator::gcn:
        out.push_back({prefix + "W", {cfg.d, cfg.d}});
        out.push_back({prefix + "b", {cfg.d, 1}});
        break;
      case Aggregator::graphsage:
        out.push_back({prefix + "W", {cfg.d, 2 * cfg.d}});
        out.push_back({prefix + "b", {cfg.d, 1}});
        break;
      case Aggregator::bi:
        out.push_back({prefix + "W1", {cfg.d, cfg.d}});
        out.push_back({prefix + "W2", {cfg.d, cfg.d}});
        break;
    }
  }
  return out;
}

/// Loads and validates every section against `cfg` and the vocabulary
/// sizes. Throws ShapeError listing expected vs found dimensions.
inline KglnParams load_checkpoint(std::istream& in, const ModelConfig& cfg, std::size_t n_users,
                                  std::size_t n_entities, std::size_t n_relations) {
  cfg.validate();
  const auto sections = read_sections(in);
  const auto expected = expected_shapes(cfg, n_users, n_entities, n_relations);
  std::string problems;
  auto find = [&](const std::string& name) -> const NamedMatrix* {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  };
  for (const auto& [name, shape] : expected) {
    const NamedMatrix* s = find(name);
    if (!s) {
      problems += " " + name + ": expected " + std::to_string(shape.first) + "x" + std::to_string(shape.second) +
                  ", found missing;";
    } else if (s->value.rows() != shape.first || s->value.cols() != shape.second) {
      problems += " " + name + ": expected " + std::to_string(shape.first) + "x" + std::to_string(shape.second) +
                  ", found " + std::to_string(s->value.rows()) + "x" + std::to_string(s->value.cols()) + ";";
    }
  }
  if (sections.size() != expected.size()) {
    problems += " section count: expected " + std::to_string(expected.size()) + ", found " +
                std::to_string(sections.size()) + ";";
  }
  if (!problems.empty()) throw ShapeError("checkpoint does not match configuration:" + problems);

  KglnParams p;
  p.config = cfg;
  p.users = find("user_table")->value;
  p.entities = find("entity_table")->value;
  p.relations = find("relation_table")->value;
  p.layers.resize(cfg.layer_count());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string prefix = "agg." + std::to_string(l + 1) + ".";
    auto& L = p.layers[l];
    if (cfg.aggregator == Aggregator::bi) {
      L.W1 = find(prefix + "W1")->value;
      L.W2 = find(prefix + "W2")->value;
    } else {
      L.W = find(prefix + "W")->value;
      const auto& b = find(prefix + "b")->value;
      L.b = DenseVector(std::vector<float>(b.flat().begin(), b.flat().end()));
    }
  }
  return p;
}

}  // namespace kgln
