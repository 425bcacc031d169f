// Copyright 2026 The ebmlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EBMLAB_ERROR_HPP_
#define EBMLAB_ERROR_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ebmlab {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an operation's arity or broadcast rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Misuse of the differentiation API: non-scalar outputs, unreachable inputs,
// second-order requests on untaped gradients.
class GraphError : public Error {
 public:
  using Error::Error;
};

// Invalid argument or configuration value. `key()` names the offending field
// when one is known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string key = {})
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Non-finite values or divergence. `step()` is the iteration at which the
// problem was detected, or -1 outside iterative procedures.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message, std::int64_t step = -1)
      : Error(message), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

// Malformed input files.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ebmlab

#endif  // EBMLAB_ERROR_HPP_
