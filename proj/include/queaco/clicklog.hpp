// Copyright 2026 The QUEACO Lab Authors.
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

// Behavior-data atoms: one record per (query, clicked product).
//
// Click log line format (JSONL):
//   {"query_id": str, "query_tokens": [str], "product_id": str,
//    "clicks": int, "attributes": {entity_type: canonical value}}

#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "queaco/common.hpp"
#include "queaco/corpus.hpp"

namespace queaco {

struct ClickRecord {
  std::string query_id;
  std::vector<std::string> query_tokens;
  std::string product_id;
  long clicks = 0;
  std::map<std::string, std::string> attributes;

  bool operator==(const ClickRecord&) const = default;
};

using ClickLog = std::vector<ClickRecord>;

inline nlohmann::json click_to_json(const ClickRecord& r) {
  return {{"query_id", r.query_id},
          {"query_tokens", r.query_tokens},
          {"product_id", r.product_id},
          {"clicks", r.clicks},
          {"attributes", r.attributes}};
}

inline ClickRecord click_from_json(const nlohmann::json& j) {
  ClickRecord r;
  for (const char* key : {"query_id", "product_id", "clicks"})
    if (!j.contains(key)) fail("click record is missing key '", key, "'");
  r.query_id = j.at("query_id").get<std::string>();
  if (j.contains("query_tokens")) r.query_tokens = j.at("query_tokens").get<std::vector<std::string>>();
  r.product_id = j.at("product_id").get<std::string>();
  r.clicks = j.at("clicks").get<long>();
  if (r.clicks < 1) fail("click record for query '", r.query_id, "' has clicks < 1");
  if (j.contains("attributes"))
    r.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
  return r;
}

inline void store_click_log(const ClickLog& log, const std::string& path) {
  std::string out;
  for (const auto& r : log) out += click_to_json(r).dump() + "\n";
  write_text_file(path, out);
}

inline ClickLog load_click_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open click log '", path, "'");
  ClickLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      log.push_back(click_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(path, ":", line_no, ": malformed line: ", e.what());
    } catch (const Error& e) {
      fail(path, ":", line_no, ": ", e.what());
    }
  }
  return log;
}

}  // namespace queaco
