// Copyright 2026 The mdsvit Authors
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

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace mdsvit::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Flat key/value settings with typed defaults ("train.lr", "data.root", ...).
class RunConfig {
 public:
  RunConfig();

  /// Every accepted key, sorted.
  static std::vector<std::string> valid_keys();

  /// Throws ConfigError naming the valid keys on an unknown key, or on a
  /// value of the wrong type.
  void set(const std::string& key, const nlohmann::json& value);
  /// "key=value"; the value is read as JSON when it parses, else as text.
  void set_assignment(const std::string& assignment);
  /// Applies a flat JSON object file.
  void load_file(const std::string& path);

  std::string str(const std::string& key) const;
  long long integer(const std::string& key) const;
  double number(const std::string& key) const;
  bool flag(const std::string& key) const;

  std::string to_json() const;

 private:
  std::map<std::string, nlohmann::json> values_;
};

/// Runs the command line (arguments exclude the program name). Progress and
/// diagnostics go to `err`, reports to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdsvit::cli
