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

#include "trigsense/artifacts.hpp"

#include <fstream>
#include <sstream>

#include "trigsense/core.hpp"

namespace trigsense::artifacts {

namespace fs = std::filesystem;

Json HeaderJson(const Header& header) {
  return Json{{"schema", "trigsense." + header.kind},
              {"schema_version", kSchemaVersion},
              {"config_hash", header.config_hash},
              {"seed", header.seed}};
}

Header ParseHeader(const Json& j, const std::string& kind, const std::string& source) {
  const std::string expected = "trigsense." + kind;
  if (!j.is_object() || !j.contains("schema") || j["schema"] != expected) {
    Fail(ErrorKind::kDataError, source + ": expected schema '" + expected + "'");
  }
  if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion) {
    Fail(ErrorKind::kDataError, source + ": unsupported schema_version");
  }
  if (!j.contains("config_hash") || !j["config_hash"].is_string() || !j.contains("seed") ||
      !j["seed"].is_number_unsigned()) {
    Fail(ErrorKind::kDataError, source + ": header lacks config_hash or seed");
  }
  return Header{kind, j["config_hash"].get<std::string>(), j["seed"].get<std::uint64_t>()};
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kDataError, "cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) Fail(ErrorKind::kDataError, "write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kDataError, "cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteJsonl(const fs::path& path, const Header& header, const std::vector<Json>& records) {
  std::string out = HeaderJson(header).dump() + "\n";
  for (const auto& r : records) out += r.dump() + "\n";
  WriteText(path, out);
}

JsonlFile ReadJsonl(const fs::path& path, const std::string& kind) {
  std::istringstream in(ReadText(path));
  JsonlFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) Fail(ErrorKind::kDataError, where + ": malformed record");
    if (lineno == 1) {
      file.header = ParseHeader(j, kind, where);
    } else {
      file.records.push_back(std::move(j));
    }
  }
  if (lineno == 0) Fail(ErrorKind::kDataError, path.string() + ": empty artifact");
  return file;
}

void WriteJson(const fs::path& path, const Header& header, Json body) {
  if (!body.is_object()) Fail(ErrorKind::kInternalError, "artifact body must be an object");
  body.update(HeaderJson(header));
  WriteText(path, body.dump(2) + "\n");
}

Json ReadJson(const fs::path& path, const std::string& kind) {
  Json j = Json::parse(ReadText(path), nullptr, false);
  if (j.is_discarded()) Fail(ErrorKind::kDataError, path.string() + ": malformed JSON");
  ParseHeader(j, kind, path.string());
  return j;
}

}  // namespace trigsense::artifacts
