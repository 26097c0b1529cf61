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

// Flat `key = value` hyperparameter files. Every resolved key remembers
// where its value came from (default, file or flag); flags beat the file,
// the file beats defaults.

#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgln/errors.hpp"
#include "kgln/model.hpp"
#include "kgln/text.hpp"

namespace kgln {

enum class OptimizerKind { sgd, adam };

inline std::string_view to_string(OptimizerKind o) { return o == OptimizerKind::sgd ? "sgd" : "adam"; }

struct TrainConfig {
  double lr = 0.01;
  double l2 = 1e-5;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("train config: lr must be >= 0");
    if (!(l2 >= 0.0)) throw std::invalid_argument("train config: lambda must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (patience == 0) throw std::invalid_argument("train config: patience must be >= 1");
  }
};

struct KglnConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Published hyperparameters for the two benchmark corpora.
inline KglnConfig movielens_preset() {
  KglnConfig c;
  c.model.d = 16;
  c.model.K = 4;
  c.model.H = 2;
  c.train.l2 = 1e-5;
  c.train.lr = 0.01;
  return c;
}
inline KglnConfig bookcrossing_preset() {
  KglnConfig c;
  c.model.d = 8;
  c.model.K = 8;
  c.model.H = 1;
  c.train.l2 = 2e-6;
  c.train.lr = 0.005;
  return c;
}

enum class ValueSource { default_value, file, flag };

inline std::string_view to_string(ValueSource s) {
  switch (s) {
    case ValueSource::default_value: return "default";
    case ValueSource::file: return "file";
    case ValueSource::flag: return "flag";
  }
  return "?";
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "preset",     "d",         "K",          "H",         "lambda",   "lr",        "aggregator",
      "attention_mode", "combine", "tie_layers", "seed",    "batch_size", "max_epochs", "patience",
      "optimizer"};
  return keys;
}

namespace detail {
template <class T>
T config_number(std::string_view key, std::string_view value, std::size_t line) {
  const auto v = parse_number<T>(value);
  if (!v) throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'", std::string(key), line);
  return *v;
}
}  // namespace detail

/// Applies one key to `cfg`. Throws ConfigError naming the key.
inline void apply_config_key(KglnConfig& cfg, std::string_view key, std::string_view value, std::size_t line = 0) {
  const std::string k(key);
  auto bad = [&]() -> ConfigError {
    return ConfigError("invalid value '" + std::string(value) + "' for key '" + k + "'", k, line);
  };
  if (key == "preset") {
    if (value == "movielens" || value == "ml1m" || value == "movielens-1m") cfg = movielens_preset();
    else if (value == "bookcrossing" || value == "book-crossing" || value == "bx") cfg = bookcrossing_preset();
    else throw bad();
  } else if (key == "d") {
    cfg.model.d = detail::config_number<std::size_t>(key, value, line);
    if (cfg.model.d == 0) throw bad();
  } else if (key == "K") {
    cfg.model.K = detail::config_number<std::size_t>(key, value, line);
    if (cfg.model.K == 0) throw bad();
  } else if (key == "H") {
    cfg.model.H = detail::config_number<std::size_t>(key, value, line);
    if (cfg.model.H == 0) throw bad();
  } else if (key == "lambda") {
    cfg.train.l2 = detail::config_number<double>(key, value, line);
    if (!(cfg.train.l2 >= 0.0)) throw bad();
  } else if (key == "lr") {
    cfg.train.lr = detail::config_number<double>(key, value, line);
    if (!(cfg.train.lr >= 0.0)) throw bad();
  } else if (key == "aggregator") {
    const auto a = parse_aggregator(value);
    if (!a) throw bad();
    cfg.model.aggregator = *a;
  } else if (key == "attention_mode") {
    const auto m = parse_attention_mode(value);
    if (!m) throw bad();
    cfg.model.attention = *m;
  } else if (key == "combine") {
    const auto c = parse_combine(value);
    if (!c) throw bad();
    cfg.model.combine = *c;
  } else if (key == "tie_layers") {
    if (value == "true" || value == "1") cfg.model.tie_layers = true;
    else if (value == "false" || value == "0") cfg.model.tie_layers = false;
    else throw bad();
  } else if (key == "seed") {
    cfg.train.seed = detail::config_number<std::uint64_t>(key, value, line);
  } else if (key == "batch_size") {
    cfg.train.batch_size = detail::config_number<std::size_t>(key, value, line);
    if (cfg.train.batch_size == 0) throw bad();
  } else if (key == "max_epochs") {
    cfg.train.max_epochs = detail::config_number<std::size_t>(key, value, line);
  } else if (key == "patience") {
    cfg.train.patience = detail::config_number<std::size_t>(key, value, line);
    if (cfg.train.patience == 0) throw bad();
  } else if (key == "optimizer") {
    if (value == "adam") cfg.train.optimizer = OptimizerKind::adam;
    else if (value == "sgd") cfg.train.optimizer = OptimizerKind::sgd;
    else throw bad();
  } else {
    throw ConfigError("unknown config key '" + k + "'", k, line);
  }
}

/// Current value of `key` rendered as text.
inline std::string config_value(const KglnConfig& cfg, std::string_view key) {
  if (key == "d") return std::to_string(cfg.model.d);
  if (key == "K") return std::to_string(cfg.model.K);
  if (key == "H") return std::to_string(cfg.model.H);
  if (key == "lambda") return format_number(cfg.train.l2);
  if (key == "lr") return format_number(cfg.train.lr);
  if (key == "aggregator") return std::string(to_string(cfg.model.aggregator));
  if (key == "attention_mode") return std::string(to_string(cfg.model.attention));
  if (key == "combine") return std::string(to_string(cfg.model.combine));
  if (key == "tie_layers") return cfg.model.tie_layers ? "true" : "false";
  if (key == "seed") return std::to_string(cfg.train.seed);
  if (key == "batch_size") return std::to_string(cfg.train.batch_size);
  if (key == "max_epochs") return std::to_string(cfg.train.max_epochs);
  if (key == "patience") return std::to_string(cfg.train.patience);
  if (key == "optimizer") return std::string(to_string(cfg.train.optimizer));
  throw ConfigError("unknown config key '" + std::string(key) + "'", std::string(key));
}

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines ('#' starts a comment). Keys are checked
/// against the known set but not applied.
inline std::vector<ConfigEntry> parse_config_entries(std::istream& in) {
  std::vector<ConfigEntry> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("expected key = value, got '" + std::string(line) + "'", std::string(line), lineno);
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
      throw ConfigError("unknown config key '" + key + "'", key, lineno);
    }
    out.push_back({key, value, lineno});
  }
  return out;
}

/// A configuration together with the origin of every key.
struct ResolvedConfig {
  KglnConfig value;
  std::map<std::string, ValueSource> source;
};

/// Defaults, then the file (a `preset` line applies before other keys),
/// then flag overrides in order.
inline ResolvedConfig resolve_config(const KglnConfig& defaults, const std::vector<ConfigEntry>& file,
                                     const std::vector<std::pair<std::string, std::string>>& flags) {
  ResolvedConfig r;
  r.value = defaults;
  for (const auto& k : config_keys())
    if (k != "preset") r.source[k] = ValueSource::default_value;
  auto apply = [&](const std::vector<ConfigEntry>& entries, ValueSource src) {
    for (const auto& e : entries)
      if (e.key == "preset") apply_config_key(r.value, e.key, e.value, e.line);
    for (const auto& e : entries) {
      if (e.key == "preset") continue;
      apply_config_key(r.value, e.key, e.value, e.line);
      r.source[e.key] = src;
    }
  };
  apply(file, ValueSource::file);
  std::vector<ConfigEntry> flag_entries;
  for (const auto& [k, v] : flags) {
    if (std::find(config_keys().begin(), config_keys().end(), k) == config_keys().end()) {
      throw ConfigError("unknown config key '" + k + "'", k);
    }
    flag_entries.push_back({k, v, 0});
  }
  apply(flag_entries, ValueSource::flag);
  r.value.model.validate();
  r.value.train.validate();
  return r;
}

inline std::string render_config(const KglnConfig& cfg) {
  std::ostringstream out;
  for (const auto& k : config_keys()) {
    if (k == "preset") continue;
    out << k << " = " << config_value(cfg, k) << '\n';
  }
  return out.str();
}

inline KglnConfig parse_config(std::istream& in, const KglnConfig& defaults = {}) {
  return resolve_config(defaults, parse_config_entries(in), {}).value;
}

}  // namespace kgln
