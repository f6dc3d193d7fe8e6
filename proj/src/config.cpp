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

#include "trigsense/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "trigsense/core.hpp"

namespace trigsense::config {

namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool ValidKey(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) {
      return false;
    }
  }
  return true;
}

[[noreturn]] void BadValue(const std::string& key, const std::string& value,
                           const char* expected) {
  Fail(ErrorKind::kConfigError,
       "config key '" + key + "' = '" + value + "' is not " + expected);
}

}  // namespace

std::string FormatDouble(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

KeyValues KeyValues::Parse(std::string_view text, const std::string& source) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = Trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorKind::kConfigError,
           source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = Trim(body.substr(0, eq));
    if (!ValidKey(key)) {
      Fail(ErrorKind::kConfigError,
           source + ":" + std::to_string(lineno) + ": invalid key '" + key + "'");
    }
    kv.entries_[key] = Trim(body.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::LoadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kConfigError, "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str(), path);
}

void KeyValues::Set(const std::string& key, const std::string& value) {
  if (!ValidKey(key)) Fail(ErrorKind::kConfigError, "invalid config key '" + key + "'");
  entries_[key] = Trim(value);
}

void KeyValues::SetAssignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    Fail(ErrorKind::kConfigError, "override '" + assignment + "' is not key=value");
  }
  Set(Trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void KeyValues::Merge(const KeyValues& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

bool KeyValues::Has(const std::string& key) const { return entries_.count(key) != 0; }

std::optional<std::string> KeyValues::Get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValues::GetString(const std::string& key, const std::string& fallback) const {
  return Get(key).value_or(fallback);
}

double KeyValues::GetDouble(const std::string& key, double fallback) const {
  auto v = Get(key);
  if (!v) return fallback;
  double out = 0.0;
  const char* b = v->data();
  const char* e = b + v->size();
  auto res = std::from_chars(b, e, out);
  if (res.ec != std::errc() || res.ptr != e || !std::isfinite(out)) {
    BadValue(key, *v, "a finite number");
  }
  return out;
}

std::optional<double> KeyValues::GetOptionalDouble(const std::string& key) const {
  auto v = Get(key);
  if (!v || v->empty() || *v == "auto") return std::nullopt;
  return GetDouble(key, 0.0);
}

std::int64_t KeyValues::GetInt(const std::string& key, std::int64_t fallback) const {
  auto v = Get(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const char* b = v->data();
  const char* e = b + v->size();
  auto res = std::from_chars(b, e, out);
  if (res.ec != std::errc() || res.ptr != e) BadValue(key, *v, "an integer");
  return out;
}

std::uint64_t KeyValues::GetUint(const std::string& key, std::uint64_t fallback) const {
  auto v = Get(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const char* b = v->data();
  const char* e = b + v->size();
  auto res = std::from_chars(b, e, out);
  if (res.ec != std::errc() || res.ptr != e) BadValue(key, *v, "a non-negative integer");
  return out;
}

bool KeyValues::GetBool(const std::string& key, bool fallback) const {
  auto v = Get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  BadValue(key, *v, "a boolean");
}

std::vector<std::string> KeyValues::UnknownKeys(
    const std::set<std::string>& allowed,
    const std::vector<std::string>& allowed_prefixes) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (allowed.count(k)) continue;
    bool prefixed = false;
    for (const auto& p : allowed_prefixes) prefixed |= k.rfind(p, 0) == 0;
    if (!prefixed) out.push_back(k);
  }
  return out;
}

std::string KeyValues::Canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string KeyValues::Hash() const { return HexDigest(Fnv1a(Canonical())); }

}  // namespace trigsense::config
