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

// Run artifacts. Line-record files start with a header record
//
//   {"schema":"trigsense.<kind>","schema_version":1,"config_hash":...,"seed":...}
//
// and single-document files carry the same fields at the top level. Writes
// go through a temporary file and a rename, so a crashed phase never leaves
// a half-written artifact behind.

#ifndef TRIGSENSE_ARTIFACTS_HPP_
#define TRIGSENSE_ARTIFACTS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace trigsense::artifacts {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct Header {
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;

  friend bool operator==(const Header&, const Header&) = default;
};

Json HeaderJson(const Header& header);
// Throws kDataError unless `j` carries schema "trigsense.<kind>" at the
// supported version.
Header ParseHeader(const Json& j, const std::string& kind, const std::string& source);

struct JsonlFile {
  Header header;
  std::vector<Json> records;
};

void WriteJsonl(const std::filesystem::path& path, const Header& header,
                const std::vector<Json>& records);
JsonlFile ReadJsonl(const std::filesystem::path& path, const std::string& kind);

// `body` must be an object; the header fields are merged into it.
void WriteJson(const std::filesystem::path& path, const Header& header, Json body);
Json ReadJson(const std::filesystem::path& path, const std::string& kind);

void WriteText(const std::filesystem::path& path, const std::string& text);
std::string ReadText(const std::filesystem::path& path);

}  // namespace trigsense::artifacts

#endif  // TRIGSENSE_ARTIFACTS_HPP_
