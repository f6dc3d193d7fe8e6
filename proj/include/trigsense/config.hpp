/*
 * Copyright 2026 The Trigsense Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Flat key=value configuration files.
//
//   # comment
//   rho = 0.2
//   target_backend = toy
//
// Keys are unique; later assignments (including command-line overrides)
// replace earlier ones. The hash covers the sorted key set, so it does not
// depend on the order keys were written in.

#ifndef TRIGSENSE_CONFIG_HPP_
#define TRIGSENSE_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace trigsense::config {

class KeyValues {
 public:
  // Throws kConfigError naming `source` and the line for malformed lines.
  static KeyValues Parse(std::string_view text, const std::string& source = "<config>");
  static KeyValues LoadFile(const std::string& path);

  void Set(const std::string& key, const std::string& value);
  // "key=value"; throws kConfigError otherwise.
  void SetAssignment(const std::string& assignment);
  void Merge(const KeyValues& other);
  bool Has(const std::string& key) const;
  std::optional<std::string> Get(const std::string& key) const;

  std::string GetString(const std::string& key, const std::string& fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  std::int64_t GetInt(const std::string& key, std::int64_t fallback) const;
  std::uint64_t GetUint(const std::string& key, std::uint64_t fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;
  std::optional<double> GetOptionalDouble(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::vector<std::string> UnknownKeys(const std::set<std::string>& allowed,
                                       const std::vector<std::string>& allowed_prefixes) const;

  // Sorted "key=value" lines.
  std::string Canonical() const;
  // FNV-1a of Canonical(), 16 hex digits.
  std::string Hash() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Shortest round-trip decimal form, so hashes of parsed and re-rendered
// doubles agree.
std::string FormatDouble(double value);

}  // namespace trigsense::config

#endif  // TRIGSENSE_CONFIG_HPP_
