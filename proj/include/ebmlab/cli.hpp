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

// The ebmlab command line: train, sample, eval and gradcheck subcommands over
// a single JSON run configuration.

#ifndef EBMLAB_CLI_HPP_
#define EBMLAB_CLI_HPP_

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ebmlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitThreshold = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command line (args excludes the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Defaults for a command before kind-specific expansion.
nlohmann::json default_config(const std::string& command);

// defaults <- file <- each "a.b=value" override in order, then expansion of
// defaults that depend on other fields. Unknown keys raise ConfigError.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& file,
                              const std::vector<std::pair<std::string, nlohmann::json>>& overrides);

// "key=value" with the value parsed as JSON when possible, else as a string.
std::pair<std::string, nlohmann::json> parse_override(const std::string& text);

}  // namespace ebmlab::cli

#endif  // EBMLAB_CLI_HPP_
