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

// Core NER data model: tag vocabulary, BIO codec, labeled queries and the
// JSONL corpus format.
//
// Corpus line format:
//   {"id": str, "tokens": [str], "tags": [BIO name], "provenance": str,
//    "group": str|null}
// Vocab file format:
//   {"entity_types": [str]}

#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "queaco/common.hpp"

namespace queaco {

using TagId = int;
using TokenId = int;

inline constexpr TagId kOutsideTag = 0;

// Ordered entity types C and the derived tag list
// [O, B-C1, I-C1, ..., B-Ck, I-Ck].
class TagVocab {
 public:
  TagVocab() = default;

  explicit TagVocab(std::vector<std::string> entity_types) : types_(std::move(entity_types)) {
    std::unordered_set<std::string> seen;
    for (const auto& t : types_) {
      if (t.empty()) fail("entity type names must be non-empty");
      if (!seen.insert(t).second) fail("duplicate entity type '", t, "'");
    }
    names_.push_back("O");
    for (const auto& t : types_) {
      names_.push_back("B-" + t);
      names_.push_back("I-" + t);
    }
    for (std::size_t i = 0; i < names_.size(); ++i) index_[names_[i]] = static_cast<TagId>(i);
  }

  const std::vector<std::string>& entity_types() const { return types_; }
  const std::vector<std::string>& tag_names() const { return names_; }
  std::size_t num_types() const { return types_.size(); }
  std::size_t num_tags() const { return names_.size(); }

  const std::string& tag_name(TagId tag) const {
    check_tag(tag);
    return names_[static_cast<std::size_t>(tag)];
  }
  std::optional<TagId> find_tag(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<int> find_type(const std::string& name) const {
    auto it = std::find(types_.begin(), types_.end(), name);
    if (it == types_.end()) return std::nullopt;
    return static_cast<int>(it - types_.begin());
  }
  int type_index(const std::string& name) const {
    auto t = find_type(name);
    if (!t) fail("unknown entity type '", name, "'");
    return *t;
  }

  static constexpr TagId begin_tag(int type) { return 1 + 2 * type; }
  static constexpr TagId inside_tag(int type) { return 2 + 2 * type; }
  static constexpr bool is_begin(TagId tag) { return tag > 0 && tag % 2 == 1; }
  static constexpr bool is_inside(TagId tag) { return tag > 0 && tag % 2 == 0; }
  // Entity type of a B-/I- tag, -1 for O.
  static constexpr int type_of(TagId tag) { return tag == kOutsideTag ? -1 : (tag - 1) / 2; }

  bool valid(TagId tag) const { return tag >= 0 && static_cast<std::size_t>(tag) < names_.size(); }
  void check_tag(TagId tag) const {
    if (!valid(tag)) fail("tag index ", tag, " out of range for vocab of ", names_.size(), " tags");
  }

  bool operator==(const TagVocab& other) const { return types_ == other.types_; }

 private:
  std::vector<std::string> types_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, TagId> index_;
};

// Inclusive token range [start, end] carrying one entity type.
struct Span {
  int start = 0;
  int end = 0;
  int type = 0;

  auto operator<=>(const Span&) const = default;
};

inline std::vector<TagId> encode_bio(const TagVocab& vocab, std::span<const Span> spans,
                                     std::size_t length) {
  std::vector<TagId> tags(length, kOutsideTag);
  std::vector<int> owner(length, -1);
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const Span& sp = spans[s];
    if (sp.start < 0 || sp.end < sp.start || static_cast<std::size_t>(sp.end) >= length)
      fail("span [", sp.start, ",", sp.end, "] out of range for length ", length);
    if (sp.type < 0 || static_cast<std::size_t>(sp.type) >= vocab.num_types())
      fail("span [", sp.start, ",", sp.end, "] has unknown entity type index ", sp.type);
    for (int j = sp.start; j <= sp.end; ++j) {
      if (owner[j] >= 0) {
        const Span& other = spans[owner[j]];
        fail("overlapping spans [", other.start, ",", other.end, "] and [", sp.start, ",", sp.end,
             "]");
      }
      owner[j] = static_cast<int>(s);
      tags[j] = j == sp.start ? TagVocab::begin_tag(sp.type) : TagVocab::inside_tag(sp.type);
    }
  }
  return tags;
}

// Maximal entity mentions, sorted by start. An I-X that does not continue a
// B-X/I-X run opens a new span (conlleval-style repair), so decoding is total.
inline std::vector<Span> decode_bio(const TagVocab& vocab, std::span<const TagId> tags) {
  std::vector<Span> spans;
  int open_type = -1;
  for (std::size_t j = 0; j < tags.size(); ++j) {
    const TagId tag = tags[j];
    vocab.check_tag(tag);
    const int type = TagVocab::type_of(tag);
    const int pos = static_cast<int>(j);
    if (tag == kOutsideTag) {
      open_type = -1;
    } else if (TagVocab::is_inside(tag) && open_type == type) {
      spans.back().end = pos;
    } else {
      spans.push_back({pos, pos, type});
      open_type = type;
    }
  }
  return spans;
}

// Idempotent normalization of an arbitrary tag sequence to valid BIO.
inline std::vector<TagId> repair_bio(const TagVocab& vocab, std::span<const TagId> tags) {
  auto spans = decode_bio(vocab, tags);
  return encode_bio(vocab, spans, tags.size());
}

enum class Provenance { strong, weak, pseudo, refined, predicted };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::strong: return "strong";
    case Provenance::weak: return "weak";
    case Provenance::pseudo: return "pseudo";
    case Provenance::refined: return "refined";
    case Provenance::predicted: return "predicted";
  }
  return "strong";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "strong") return Provenance::strong;
  if (s == "weak") return Provenance::weak;
  if (s == "pseudo") return Provenance::pseudo;
  if (s == "refined") return Provenance::refined;
  if (s == "predicted") return Provenance::predicted;
  fail("unknown provenance '", s, "'");
}

struct LabeledQuery {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<TagId> tags;
  Provenance provenance = Provenance::strong;
  std::optional<std::string> group;

  bool operator==(const LabeledQuery&) const = default;
};

// Token -> id map. Id 0 is reserved for unknown tokens.
class Lexicon {
 public:
  static constexpr TokenId kUnknown = 0;

  Lexicon() { tokens_.push_back("<unk>"); }

  TokenId add(const std::string& token) {
    auto [it, inserted] = ids_.try_emplace(token, static_cast<TokenId>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }
  TokenId lookup(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnknown : it->second;
  }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
  }

  static Lexicon from_tokens(std::span<const std::string> tokens) {
    Lexicon lex;
    for (std::size_t i = 1; i < tokens.size(); ++i) lex.add(tokens[i]);
    return lex;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct Corpus {
  TagVocab vocab;
  std::vector<LabeledQuery> items;
  Lexicon lexicon;

  Corpus() = default;
  Corpus(TagVocab v, std::vector<LabeledQuery> qs) : vocab(std::move(v)), items(std::move(qs)) {
    rebuild_lexicon();
  }

  void rebuild_lexicon() {
    lexicon = Lexicon{};
    for (const auto& q : items)
      for (const auto& t : q.tokens) lexicon.add(t);
  }

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  std::size_t count(Provenance p) const {
    return static_cast<std::size_t>(std::count_if(
        items.begin(), items.end(), [p](const LabeledQuery& q) { return q.provenance == p; }));
  }

  // Structural equality: vocab and items. The lexicon is derived.
  bool operator==(const Corpus& other) const {
    return vocab == other.vocab && items == other.items;
  }
};

// Lexicon over the union of several corpora, in corpus order.
inline Lexicon joint_lexicon(std::initializer_list<const Corpus*> corpora) {
  Lexicon lex;
  for (const Corpus* c : corpora)
    for (const auto& q : c->items)
      for (const auto& t : q.tokens) lex.add(t);
  return lex;
}

inline std::vector<Span> spans_of(const Corpus& corpus, const LabeledQuery& q) {
  return decode_bio(corpus.vocab, q.tags);
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json vocab_to_json(const TagVocab& vocab) {
  return nlohmann::json{{"entity_types", vocab.entity_types()}};
}

inline TagVocab vocab_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("entity_types")) fail("vocab JSON is missing key 'entity_types'");
  return TagVocab(j.at("entity_types").get<std::vector<std::string>>());
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '", path, "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail("malformed JSON in '", path, "': ", e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write '", path, "'");
  out << text;
  if (!out) fail("write failed for '", path, "'");
}

inline TagVocab load_vocab(const std::string& path) { return vocab_from_json(read_json_file(path)); }

inline void store_vocab(const TagVocab& vocab, const std::string& path) {
  write_text_file(path, vocab_to_json(vocab).dump(2) + "\n");
}

inline nlohmann::json query_to_json(const TagVocab& vocab, const LabeledQuery& q) {
  std::vector<std::string> tag_names;
  tag_names.reserve(q.tags.size());
  for (TagId t : q.tags) tag_names.push_back(vocab.tag_name(t));
  nlohmann::json j;
  j["id"] = q.id;
  j["tokens"] = q.tokens;
  j["tags"] = tag_names;
  j["provenance"] = to_string(q.provenance);
  j["group"] = q.group ? nlohmann::json(*q.group) : nlohmann::json(nullptr);
  return j;
}

inline LabeledQuery query_from_json(const TagVocab& vocab, const nlohmann::json& j) {
  LabeledQuery q;
  for (const char* key : {"id", "tokens", "tags", "provenance"})
    if (!j.contains(key)) fail("missing key '", key, "'");
  q.id = j.at("id").get<std::string>();
  q.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& name : j.at("tags").get<std::vector<std::string>>()) {
    auto tag = vocab.find_tag(name);
    if (!tag) fail("unknown tag '", name, "'");
    q.tags.push_back(*tag);
  }
  if (q.tokens.empty()) fail("query '", q.id, "' has no tokens");
  if (q.tags.size() != q.tokens.size())
    fail("query '", q.id, "' has ", q.tokens.size(), " tokens but ", q.tags.size(), " tags");
  q.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  if (j.contains("group") && !j.at("group").is_null()) q.group = j.at("group").get<std::string>();
  return q;
}

inline std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& q : corpus.items) {
    out += query_to_json(corpus.vocab, q).dump();
    out += '\n';
  }
  return out;
}

inline void store_corpus(const Corpus& corpus, const std::string& path) {
  write_text_file(path, corpus_to_jsonl(corpus));
}

inline Corpus load_corpus(const std::string& path, const TagVocab& vocab) {
  std::ifstream in(path);
  if (!in) fail("cannot open corpus '", path, "'");
  std::vector<LabeledQuery> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      items.push_back(query_from_json(vocab, nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(path, ":", line_no, ": malformed line: ", e.what());
    } catch (const Error& e) {
      fail(path, ":", line_no, ": ", e.what());
    }
  }
  return Corpus(vocab, std::move(items));
}

}  // namespace queaco
