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

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "kgln/checkpoint.hpp"
#include "kgln/config.hpp"
#include "kgln/dataset_io.hpp"
#include "kgln/synthetic.hpp"

namespace kgln {
namespace {

TEST(Config, ParsesKeysAndComments) {
  std::istringstream in("# model\nd = 8\nK=2  # fan-out\n\naggregator = graphsage\nattention_mode = mean\nlambda = 1e-4\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.model.d, 8u);
  EXPECT_EQ(c.model.K, 2u);
  EXPECT_EQ(c.model.aggregator, Aggregator::graphsage);
  EXPECT_EQ(c.model.attention, AttentionMode::mean);
  EXPECT_DOUBLE_EQ(c.train.l2, 1e-4);
}

TEST(Config, UnknownKeyNamesKeyAndLine) {
  std::istringstream in("d = 8\ndepth = 3\n");
  try {
    parse_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "depth");
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Config, InvalidValuesRejected) {
  for (const char* text : {"d = 0\n", "K = -1\n", "aggregator = lstm\n", "lr = abc\n", "H = 0\n", "d 8\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_config(in), ConfigError) << text;
  }
}

TEST(Config, PrecedenceDefaultsFileFlags) {
  std::istringstream in("preset = bookcrossing\nd = 12\n");
  const auto r = resolve_config({}, parse_config_entries(in), {{"d", "20"}, {"lr", "0.1"}});
  EXPECT_EQ(r.value.model.d, 20u);
  EXPECT_EQ(r.value.model.K, 8u);  // from the preset
  EXPECT_DOUBLE_EQ(r.value.train.lr, 0.1);
  EXPECT_EQ(r.source.at("d"), ValueSource::flag);
  EXPECT_EQ(r.source.at("lr"), ValueSource::flag);
  EXPECT_EQ(r.source.at("H"), ValueSource::default_value);
  EXPECT_THROW(resolve_config({}, {}, {{"nope", "1"}}), ConfigError);
}

TEST(Config, PresetValues) {
  const auto ml = movielens_preset();
  EXPECT_EQ(ml.model.d, 16u);
  EXPECT_EQ(ml.model.K, 4u);
  EXPECT_EQ(ml.model.H, 2u);
  EXPECT_DOUBLE_EQ(ml.train.l2, 1e-5);
  EXPECT_DOUBLE_EQ(ml.train.lr, 0.01);
  const auto bx = bookcrossing_preset();
  EXPECT_EQ(bx.model.d, 8u);
  EXPECT_EQ(bx.model.K, 8u);
  EXPECT_EQ(bx.model.H, 1u);
  EXPECT_DOUBLE_EQ(bx.train.l2, 2e-6);
  EXPECT_DOUBLE_EQ(bx.train.lr, 0.005);
}

TEST(Config, RenderRoundTrips) {
  KglnConfig c = bookcrossing_preset();
  c.model.aggregator = Aggregator::bi;
  c.train.seed = 99;
  std::istringstream in(render_config(c));
  const auto back = parse_config(in);
  EXPECT_EQ(render_config(back), render_config(c));
}

ModelConfig small_model(Aggregator a, std::size_t H) {
  ModelConfig m;
  m.d = 3;
  m.K = 2;
  m.H = H;
  m.aggregator = a;
  return m;
}

TEST(Checkpoint, RoundTripIsExact) {
  for (auto a : {Aggregator::gcn, Aggregator::graphsage, Aggregator::bi}) {
    const auto cfg = small_model(a, 2);
    const auto p = init_params(cfg, 5, 7, 3, 11);
    std::stringstream buf;
    save_checkpoint(buf, p);
    const auto q = load_checkpoint(buf, cfg, 5, 7, 3);
    EXPECT_EQ(flatten(p), flatten(q)) << to_string(a);
  }
}

TEST(Checkpoint, ShapeMismatchListsDimensions) {
  const auto p = init_params(small_model(Aggregator::gcn, 1), 5, 7, 3, 1);
  std::stringstream buf;
  save_checkpoint(buf, p);
  const std::string bytes = buf.str();
  {
    std::istringstream in(bytes);
    auto other = small_model(Aggregator::gcn, 1);
    other.d = 4;
    try {
      load_checkpoint(in, other, 5, 7, 3);
      FAIL();
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("user_table: expected 5x4, found 5x3"), std::string::npos) << msg;
    }
  }
  {
    std::istringstream in(bytes);
    EXPECT_THROW(load_checkpoint(in, small_model(Aggregator::gcn, 1), 6, 7, 3), ShapeError);
  }
  {
    std::istringstream in(bytes);
    EXPECT_THROW(load_checkpoint(in, small_model(Aggregator::bi, 1), 5, 7, 3), ShapeError);
  }
  {
    std::istringstream in("XXXX");
    EXPECT_THROW(load_checkpoint(in, small_model(Aggregator::gcn, 1), 5, 7, 3), ParseError);
  }
}

TEST(DatasetIo, RoundTrip) {
  SyntheticSpec spec;
  spec.users = 10;
  spec.items = 20;
  spec.relations = 2;
  spec.values_per_relation = 4;
  auto corpus = make_synthetic_corpus(spec);
  const auto prepared = prepare_dataset(corpus.ratings, corpus.item_map, corpus.graph, DatasetRecipe::movielens(1));
  const auto dir = std::filesystem::path(KGLN_TEST_TMP) / "dataset_io_roundtrip";
  std::filesystem::remove_all(dir);
  save_dataset(dir, corpus.graph, prepared.data);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.graph.entity_count(), corpus.graph.entity_count());
  EXPECT_EQ(back.graph.relation_count(), corpus.graph.relation_count());
  EXPECT_EQ(back.graph.triples().size(), corpus.graph.triples().size());
  const auto& a = prepared.data;
  const auto& b = back.data;
  EXPECT_EQ(a.user_keys, b.user_keys);
  EXPECT_EQ(a.item_keys, b.item_keys);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].user, b.records[i].user);
    EXPECT_EQ(a.records[i].item, b.records[i].item);
    EXPECT_EQ(a.records[i].label, b.records[i].label);
    EXPECT_EQ(a.records[i].split, b.records[i].split);
  }
  for (std::size_t v = 0; v < a.item_count; ++v)
    EXPECT_EQ(corpus.graph.entities().name(a.item_to_entity[v]), back.graph.entities().name(b.item_to_entity[v]));
}

TEST(DatasetIo, MissingFilesAreParseErrors) {
  EXPECT_THROW(load_dataset(std::filesystem::path(KGLN_TEST_TMP) / "no_such_dataset"), ParseError);
}

}  // namespace
}  // namespace kgln
