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

// Span-level micro precision/recall/F1, token coverage and per-slice
// breakdowns.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "queaco/corpus.hpp"

namespace queaco {

struct SpanCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double f1() const { return harmonic_mean(precision(), recall()); }

  static double harmonic_mean(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

  SpanCounts& operator+=(const SpanCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const SpanCounts&) const = default;
};

struct Metrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  SpanCounts counts;
  // Set when nothing was predicted; precision is then reported as 0.
  bool empty_prediction = false;
  std::map<std::string, SpanCounts> per_type;
  std::map<std::string, SpanCounts> per_group;
};

inline Metrics finalize_metrics(const SpanCounts& c) {
  Metrics m;
  m.counts = c;
  m.precision = c.precision();
  m.recall = c.recall();
  m.f1 = SpanCounts::harmonic_mean(m.precision, m.recall);
  m.empty_prediction = c.tp + c.fp == 0;
  return m;
}

// Exact (start, end, type) matches for one item.
inline SpanCounts match_spans(const std::vector<Span>& pred, const std::vector<Span>& gold) {
  SpanCounts c;
  std::size_t i = 0, j = 0;
  // Both lists come from decode_bio and are sorted and duplicate-free.
  while (i < pred.size() && j < gold.size()) {
    if (pred[i] == gold[j]) {
      ++c.tp, ++i, ++j;
    } else if (pred[i] < gold[j]) {
      ++c.fp, ++i;
    } else {
      ++c.fn, ++j;
    }
  }
  c.fp += pred.size() - i;
  c.fn += gold.size() - j;
  return c;
}

inline Metrics span_prf(const Corpus& pred, const Corpus& gold) {
  std::unordered_map<std::string, const LabeledQuery*> gold_by_id;
  for (const auto& q : gold.items) gold_by_id[q.id] = &q;

  std::vector<std::string> missing;
  std::unordered_set<std::string> pred_ids;
  for (const auto& q : pred.items) {
    pred_ids.insert(q.id);
    if (!gold_by_id.count(q.id)) missing.push_back(q.id);
  }
  for (const auto& q : gold.items)
    if (!pred_ids.count(q.id)) missing.push_back(q.id);
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    if (missing.size() > 20) missing.resize(20);
    fail("prediction and gold corpora are not aligned; unmatched ids: ", join(missing, ", "));
  }

  SpanCounts total;
  std::map<std::string, SpanCounts> per_type, per_group;
  for (const auto& t : gold.vocab.entity_types()) per_type[t];
  for (const auto& p : pred.items) {
    const LabeledQuery& g = *gold_by_id.at(p.id);
    if (p.tags.size() != g.tags.size())
      fail("query '", p.id, "': predicted length ", p.tags.size(), " != gold length ", g.tags.size());
    auto ps = decode_bio(pred.vocab, p.tags);
    auto gs = decode_bio(gold.vocab, g.tags);
    SpanCounts c = match_spans(ps, gs);
    total += c;
    if (g.group) per_group[*g.group] += c;
    for (std::size_t t = 0; t < gold.vocab.num_types(); ++t) {
      std::vector<Span> pt, gt;
      for (const auto& s : ps)
        if (s.type == int(t)) pt.push_back(s);
      for (const auto& s : gs)
        if (s.type == int(t)) gt.push_back(s);
      per_type[gold.vocab.entity_types()[t]] += match_spans(pt, gt);
    }
  }
  Metrics m = finalize_metrics(total);
  m.per_type = std::move(per_type);
  m.per_group = std::move(per_group);
  return m;
}

// Fraction of tokens carrying a non-O tag.
inline double token_coverage(const Corpus& corpus) {
  std::size_t total = 0, tagged = 0;
  for (const auto& q : corpus.items) {
    total += q.tags.size();
    tagged += static_cast<std::size_t>(
        std::count_if(q.tags.begin(), q.tags.end(), [](TagId t) { return t != kOutsideTag; }));
  }
  return total == 0 ? 0.0 : double(tagged) / double(total);
}

inline nlohmann::json counts_to_json(const SpanCounts& c) {
  return {{"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()},
          {"tp", c.tp},                 {"fp", c.fp},           {"fn", c.fn}};
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j = counts_to_json(m.counts);
  j["empty_prediction"] = m.empty_prediction;
  j["per_type"] = nlohmann::json::object();
  for (const auto& [k, v] : m.per_type) j["per_type"][k] = counts_to_json(v);
  j["per_group"] = nlohmann::json::object();
  for (const auto& [k, v] : m.per_group) j["per_group"][k] = counts_to_json(v);
  return j;
}

// Text table with Precision / Recall / F1 columns in percent.
struct ReportRow {
  std::string method;
  double precision = 0, recall = 0, f1 = 0;
  double f1_std = -1;  // negative: not shown
};

inline std::string format_prf_table(const std::vector<ReportRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  bool with_std = std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.f1_std >= 0; });
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s | %9s | %9s | %9s%s\n", int(width), "Method", "Precision",
                "Recall", "F1", with_std ? " |   F1 std" : "");
  out += buf;
  out += std::string(width + 36 + (with_std ? 12 : 0), '-') + "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s | %9.2f | %9.2f | %9.2f", int(width), r.method.c_str(),
                  100 * r.precision, 100 * r.recall, 100 * r.f1);
    out += buf;
    if (with_std) {
      std::snprintf(buf, sizeof buf, " | %8.2f", 100 * std::max(0.0, r.f1_std));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace queaco
