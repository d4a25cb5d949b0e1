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

// Distant supervision by exact token-wise matching against attribute
// dictionaries.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "queaco/clicklog.hpp"
#include "queaco/corpus.hpp"
#include "queaco/eval.hpp"

namespace queaco {

class AttributeDictionary {
 public:
  AttributeDictionary() = default;
  explicit AttributeDictionary(TagVocab vocab) : vocab_(std::move(vocab)) {}

  const TagVocab& vocab() const { return vocab_; }

  void add(int type, std::vector<std::string> value) {
    if (type < 0 || std::size_t(type) >= vocab_.num_types()) fail("unknown entity type index ", type);
    if (value.empty()) fail("dictionary values must be non-empty");
    if (!entries_[type].insert(value).second) return;
    auto& bucket = by_first_[value.front()];
    bucket.push_back({std::move(value), type});
  }
  void add(const std::string& type_name, const std::string& value) {
    add(vocab_.type_index(type_name), tokenize(value));
  }

  bool contains(int type, const std::vector<std::string>& value) const {
    auto it = entries_.find(type);
    return it != entries_.end() && it->second.count(value) > 0;
  }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [t, s] : entries_) n += s.size();
    return n;
  }
  const std::map<int, std::set<std::vector<std::string>>>& entries() const { return entries_; }

  struct Candidate {
    std::vector<std::string> value;
    int type;
  };
  const std::vector<Candidate>* starting_with(const std::string& token) const {
    auto it = by_first_.find(token);
    return it == by_first_.end() ? nullptr : &it->second;
  }

 private:
  TagVocab vocab_;
  std::map<int, std::set<std::vector<std::string>>> entries_;
  std::unordered_map<std::string, std::vector<Candidate>> by_first_;
};

// Tags the tokens with non-overlapping exact dictionary matches.
//
// The chosen match set maximizes the number of covered tokens, so adding
// entries can never lower coverage. Among equally covering sets the
// preference is: a match starting further left, then a longer match, then the
// earlier entity type in vocab order.
inline std::vector<TagId> weak_label(const std::vector<std::string>& tokens,
                                     const AttributeDictionary& dict) {
  const std::size_t n = tokens.size();
  // matches[i]: (length, type) of dictionary values starting at i, ordered
  // by length desc, type asc.
  std::vector<std::vector<std::pair<int, int>>> matches(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* cands = dict.starting_with(tokens[i]);
    if (!cands) continue;
    for (const auto& c : *cands) {
      if (i + c.value.size() > n) continue;
      if (std::equal(c.value.begin(), c.value.end(), tokens.begin() + long(i)))
        matches[i].push_back({int(c.value.size()), c.type});
    }
    std::sort(matches[i].begin(), matches[i].end(), [](auto a, auto b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
  }
  // best[i]: max covered tokens within tokens[i..n).
  std::vector<int> best(n + 1, 0);
  std::vector<int> choice(n, -1);  // index into matches[i], -1 = skip
  for (std::size_t i = n; i-- > 0;) {
    best[i] = best[i + 1];
    for (std::size_t k = 0; k < matches[i].size(); ++k) {
      int len = matches[i][k].first;
      int cov = len + best[i + std::size_t(len)];
      if (cov > best[i] || (cov == best[i] && choice[i] < 0)) {
        best[i] = cov;
        choice[i] = int(k);
      }
    }
  }
  std::vector<TagId> tags(n, kOutsideTag);
  for (std::size_t i = 0; i < n;) {
    if (choice[i] < 0) {
      ++i;
      continue;
    }
    auto [len, type] = matches[i][std::size_t(choice[i])];
    tags[i] = TagVocab::begin_tag(type);
    for (int k = 1; k < len; ++k) tags[i + std::size_t(k)] = TagVocab::inside_tag(type);
    i += std::size_t(len);
  }
  return tags;
}

// Applies weak_label to every item; output provenance is `weak`.
inline Corpus weak_label_corpus(const Corpus& input, const AttributeDictionary& dict) {
  Corpus out;
  out.vocab = input.vocab;
  out.items.reserve(input.items.size());
  for (const auto& q : input.items) {
    LabeledQuery w = q;
    w.tags = weak_label(q.tokens, dict);
    w.provenance = Provenance::weak;
    out.items.push_back(std::move(w));
  }
  out.rebuild_lexicon();
  return out;
}

enum class WeakMatchMode { catalog, top_clicked, all_clicked };

inline WeakMatchMode weak_match_mode_from_string(const std::string& s) {
  if (s == "catalog") return WeakMatchMode::catalog;
  if (s == "top_clicked") return WeakMatchMode::top_clicked;
  if (s == "all_clicked") return WeakMatchMode::all_clicked;
  fail("unknown weak match mode '", s, "' (expected catalog, top_clicked or all_clicked)");
}

// Weak labels from each query's own clicked products: the dictionary of a
// query holds the attribute values of its top clicked product (ties: smallest
// product id) or of all clicked products. With `index`, a value is kept only
// if the index lists it, under the type(s) the index gives it. Queries
// without clicks are left all O.
inline Corpus weak_label_from_clicks(const Corpus& input, const ClickLog& log, WeakMatchMode mode,
                                     const AttributeDictionary* index = nullptr) {
  if (mode == WeakMatchMode::catalog) {
    if (!index) fail("catalog weak labeling needs a dictionary");
    return weak_label_corpus(input, *index);
  }
  std::unordered_map<std::string, std::vector<const ClickRecord*>> by_query;
  for (const auto& r : log) by_query[r.query_id].push_back(&r);
  Corpus out;
  out.vocab = input.vocab;
  for (const auto& q : input.items) {
    AttributeDictionary dict(input.vocab);
    auto it = by_query.find(q.id);
    if (it != by_query.end()) {
      std::vector<const ClickRecord*> chosen = it->second;
      if (mode == WeakMatchMode::top_clicked) {
        const ClickRecord* top = chosen.front();
        for (const auto* r : chosen)
          if (r->clicks > top->clicks || (r->clicks == top->clicks && r->product_id < top->product_id)) top = r;
        chosen = {top};
      }
      for (const auto* r : chosen) {
        for (const auto& [type, value] : r->attributes) {
          auto t = input.vocab.find_type(type);
          if (!t) continue;
          auto toks = tokenize(value);
          if (toks.empty()) continue;
          if (!index) {
            dict.add(*t, toks);
            continue;
          }
          for (std::size_t u = 0; u < input.vocab.num_types(); ++u)
            if (index->contains(int(u), toks)) dict.add(int(u), toks);
        }
      }
    }
    LabeledQuery w = q;
    w.tags = weak_label(q.tokens, dict);
    w.provenance = Provenance::weak;
    out.items.push_back(std::move(w));
  }
  out.rebuild_lexicon();
  return out;
}

struct CoverageStats {
  double coverage = 0;
  std::map<std::string, std::size_t> per_type_counts;
  std::optional<double> span_precision;
  std::optional<double> span_recall;
};

inline CoverageStats coverage_stats(const Corpus& corpus, const Corpus* gold = nullptr) {
  CoverageStats s;
  s.coverage = token_coverage(corpus);
  for (const auto& t : corpus.vocab.entity_types()) s.per_type_counts[t] = 0;
  for (const auto& q : corpus.items)
    for (const auto& sp : decode_bio(corpus.vocab, q.tags))
      ++s.per_type_counts[corpus.vocab.entity_types()[std::size_t(sp.type)]];
  if (gold) {
    Metrics m = span_prf(corpus, *gold);
    s.span_precision = m.precision;
    s.span_recall = m.recall;
  }
  return s;
}

inline nlohmann::json dictionary_to_json(const AttributeDictionary& dict) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& t : dict.vocab().entity_types()) j[t] = nlohmann::json::array();
  for (const auto& [type, values] : dict.entries())
    for (const auto& v : values) j[dict.vocab().entity_types()[std::size_t(type)]].push_back(join(v));
  return j;
}

inline AttributeDictionary dictionary_from_json(const TagVocab& vocab, const nlohmann::json& j) {
  if (!j.is_object()) fail("dictionary JSON must be an object of type -> [values]");
  AttributeDictionary dict(vocab);
  for (const auto& [type, values] : j.items()) {
    int t = vocab.type_index(type);
    for (const auto& v : values) {
      auto toks = tokenize(v.get<std::string>());
      if (toks.empty()) fail("empty dictionary value for type '", type, "'");
      dict.add(t, std::move(toks));
    }
  }
  return dict;
}

inline AttributeDictionary load_dictionary(const std::string& path, const TagVocab& vocab) {
  return dictionary_from_json(vocab, read_json_file(path));
}

}  // namespace queaco
