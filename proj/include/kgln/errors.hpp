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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgln {

/// Mismatched tensor dimensions, or a checkpoint whose shapes disagree with
/// the configuration it is loaded against.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed text input. `line()` is 1-based; 0 means "not line-specific".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Unknown configuration key or invalid configuration value.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, std::string key, std::size_t line = 0)
      : std::invalid_argument(line ? what + " (line " + std::to_string(line) + ")" : what),
        key_(std::move(key)),
        line_(line) {}
  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

/// An entity, relation, user or item id outside its vocabulary.
class IdError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Input that is well formed but unusable: empty splits, single-class label
/// sets, users whose positives exhaust the item vocabulary.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kgln
