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

// Attribute value normalization from behavior data: click-weighted
// query-attribute relevance, surface-to-canonical mapping tables (global and
// conditioned on the query's product type) and a multi-label product type
// classifier for queries without enough clicks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "queaco/clicklog.hpp"
#include "queaco/corpus.hpp"
#include "queaco/eval.hpp"
#include "queaco/optim.hpp"

namespace queaco {

inline const std::string kGlobalContext = "GLOBAL";

// Click counts per query and value for one entity type. Folding is
// associative and commutative, so shards merge in any order.
struct RelevanceCounts {
  std::string entity_type;
  std::map<std::string, std::map<std::string, long>> clicks;  // query -> value -> clicks

  void add(const ClickRecord& r) {
    auto it = r.attributes.find(entity_type);
    if (it == r.attributes.end()) return;  // product not indexed for this type
    clicks[r.query_id][it->second] += r.clicks;
  }
  void merge(const RelevanceCounts& other) {
    if (other.entity_type != entity_type) fail("cannot merge relevance counts of different types");
    for (const auto& [q, row] : other.clicks)
      for (const auto& [v, n] : row) clicks[q][v] += n;
  }
};

struct RelevanceRow {
  std::map<std::string, double> probs;
  long support = 0;

  // Most relevant value; ties go to the lexicographically smallest.
  const std::string& argmax() const {
    auto best = probs.begin();
    for (auto it = probs.begin(); it != probs.end(); ++it)
      if (it->second > best->second) best = it;
    return best->first;
  }
  bool operator==(const RelevanceRow&) const = default;
};

struct RelevanceTable {
  std::string entity_type;
  std::map<std::string, RelevanceRow> rows;  // by query id

  const RelevanceRow* find(const std::string& query_id) const {
    auto it = rows.find(query_id);
    return it == rows.end() ? nullptr : &it->second;
  }
  bool operator==(const RelevanceTable&) const = default;
};

inline RelevanceCounts fold_relevance(std::span<const ClickRecord> log, const std::string& entity_type) {
  RelevanceCounts c;
  c.entity_type = entity_type;
  for (const auto& r : log) c.add(r);
  return c;
}

inline RelevanceTable finalize_relevance(const RelevanceCounts& c) {
  RelevanceTable t;
  t.entity_type = c.entity_type;
  for (const auto& [q, row] : c.clicks) {
    long total = 0;
    for (const auto& [v, n] : row) total += n;
    if (total <= 0) continue;
    RelevanceRow& out = t.rows[q];
    out.support = total;
    for (const auto& [v, n] : row) out.probs[v] = double(n) / double(total);
  }
  return t;
}

// P(v | X) = sum_d n(d, X) 1(d_type = v) / sum_d n(d, X), over the clicked
// products that carry the attribute.
inline RelevanceTable aggregate_relevance(std::span<const ClickRecord> log, const std::string& entity_type) {
  if (log.empty()) fail("aggregate_relevance: empty click log");
  return finalize_relevance(fold_relevance(log, entity_type));
}

struct NormEntry {
  std::string surface;
  std::string context;
  std::string canonical;
  double probability = 0;
  long support = 0;

  bool operator==(const NormEntry&) const = default;
};

// Mapping table for one entity type: rows keyed by (surface, context), each
// a distribution over canonical values. Support counts queries.
struct NormalizationTable {
  std::string entity_type;
  std::map<std::pair<std::string, std::string>, std::map<std::string, long>> counts;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> probs;

  std::vector<NormEntry> entries() const {
    std::vector<NormEntry> out;
    for (const auto& [key, row] : probs)
      for (const auto& [v, p] : row) out.push_back({key.first, key.second, v, p, counts.at(key).at(v)});
    return out;
  }
  bool operator==(const NormalizationTable&) const = default;
};

using NormalizationTables = std::map<std::string, NormalizationTable>;

// Raw (unfiltered) co-occurrence counts: for every predicted span of the
// table's type, surface m, the query's argmax product type p and the
// query's argmax behavior value v.
inline NormalizationTable count_mappings(const Corpus& predicted, const RelevanceTable& values,
                                         const RelevanceTable& product_types) {
  NormalizationTable t;
  t.entity_type = values.entity_type;
  const int type = predicted.vocab.type_index(values.entity_type);
  for (const auto& q : predicted.items) {
    const RelevanceRow* vrow = values.find(q.id);
    const RelevanceRow* prow = product_types.find(q.id);
    if (!vrow || !prow) continue;
    const std::string& v = vrow->argmax();
    const std::string& p = prow->argmax();
    for (const auto& s : decode_bio(predicted.vocab, q.tags)) {
      if (s.type != type) continue;
      std::vector<std::string> toks(q.tokens.begin() + s.start, q.tokens.begin() + s.end + 1);
      const std::string m = join(toks);
      ++t.counts[{m, p}][v];
      ++t.counts[{m, kGlobalContext}][v];
    }
  }
  return t;
}

// Drops entries with support below min_support and normalizes every row.
inline NormalizationTable finalize_mappings(NormalizationTable t, long min_support) {
  t.probs.clear();
  for (auto it = t.counts.begin(); it != t.counts.end();) {
    auto& row = it->second;
    for (auto e = row.begin(); e != row.end();) {
      if (e->second < min_support) e = row.erase(e);
      else ++e;
    }
    if (row.empty()) {
      it = t.counts.erase(it);
      continue;
    }
    long total = 0;
    for (const auto& [v, n] : row) total += n;
    auto& p = t.probs[it->first];
    for (const auto& [v, n] : row) p[v] = double(n) / double(total);
    ++it;
  }
  return t;
}

inline NormalizationTables build_mapping_tables(const Corpus& predicted,
                                                const std::map<std::string, RelevanceTable>& relevance,
                                                long min_support = 5) {
  auto pt = relevance.find("product_type");
  if (pt == relevance.end()) fail("build_mapping_tables: missing product_type relevance");
  NormalizationTables out;
  for (const auto& [type, table] : relevance)
    out[type] = finalize_mappings(count_mappings(predicted, table, pt->second), min_support);
  return out;
}

enum class NormSource { contextual, global, identity };

inline std::string to_string(NormSource s) {
  switch (s) {
    case NormSource::contextual: return "contextual";
    case NormSource::global: return "global";
    case NormSource::identity: return "identity";
  }
  return "?";
}

struct Normalized {
  std::string canonical;
  NormSource source = NormSource::identity;
};

// Contextual row, then global row, then the surface itself. Argmax ties go
// to the lexicographically smallest canonical value.
inline Normalized normalize_value(const std::string& surface, const std::string& product_type,
                                  const NormalizationTable& table) {
  const std::string m = join(tokenize(surface));
  auto pick = [&](const std::string& ctx) -> std::optional<std::string> {
    auto it = table.probs.find({m, ctx});
    if (it == table.probs.end() || it->second.empty()) return std::nullopt;
    auto best = it->second.begin();
    for (auto e = it->second.begin(); e != it->second.end(); ++e)
      if (e->second > best->second) best = e;
    return best->first;
  };
  if (!product_type.empty() && product_type != kGlobalContext)
    if (auto v = pick(product_type)) return {*v, NormSource::contextual};
  if (auto v = pick(kGlobalContext)) return {*v, NormSource::global};
  return {m, NormSource::identity};
}

inline std::string tables_to_tsv(const NormalizationTables& tables) {
  std::string out = "entity_type\tsurface\tcontext\tcanonical\tprobability\tsupport\n";
  char buf[64];
  for (const auto& [type, t] : tables)
    for (const auto& e : t.entries()) {
      std::snprintf(buf, sizeof buf, "%.17g", e.probability);
      out += type + "\t" + e.surface + "\t" + e.context + "\t" + e.canonical + "\t" + buf + "\t" +
             std::to_string(e.support) + "\n";
    }
  return out;
}

inline nlohmann::json tables_to_json(const NormalizationTables& tables) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [type, t] : tables) {
    auto& arr = j[type];
    arr = nlohmann::json::array();
    for (const auto& e : t.entries())
      arr.push_back({{"surface", e.surface}, {"context", e.context}, {"canonical", e.canonical},
                     {"probability", e.probability}, {"support", e.support}});
  }
  return j;
}

inline NormalizationTables tables_from_json(const nlohmann::json& j) {
  NormalizationTables out;
  for (const auto& [type, arr] : j.items()) {
    auto& t = out[type];
    t.entity_type = type;
    for (const auto& e : arr) {
      const std::pair<std::string, std::string> key{e.at("surface").get<std::string>(),
                                                    e.at("context").get<std::string>()};
      const auto v = e.at("canonical").get<std::string>();
      t.counts[key][v] = e.at("support").get<long>();
      t.probs[key][v] = e.at("probability").get<double>();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Product type classifier: mean of token embeddings, one sigmoid per type.

struct PtConfig {
  std::size_t embed = 32;
  double lr = 0.01;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double target_threshold = 0.1;
  double holdout = 0.1;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
};

struct PtExample {
  std::string query_id;
  std::vector<std::string> tokens;
  std::set<std::string> types;
  std::string group;
};

struct PtClassifier {
  Lexicon lexicon;
  std::vector<std::string> product_types;
  ParameterSet blocks;  // embedding [V x d], weight [d x P], bias [1 x P]

  std::vector<double> scores(const std::vector<std::string>& tokens) const {
    const auto ids = lexicon.encode(tokens);
    const Tensor& E = blocks[0];
    const Tensor& W = blocks[1];
    const Tensor& b = blocks[2];
    const std::size_t d = E.cols, P = W.cols;
    std::vector<double> h(d, 0.0);
    for (TokenId id : ids)
      for (std::size_t k = 0; k < d; ++k) h[k] += E.data[std::size_t(id) * d + k];
    for (auto& x : h) x /= double(std::max<std::size_t>(1, ids.size()));
    std::vector<double> s(P);
    for (std::size_t c = 0; c < P; ++c) {
      double z = b.data[c];
      for (std::size_t k = 0; k < d; ++k) z += h[k] * W.data[k * P + c];
      s[c] = 1.0 / (1.0 + std::exp(-z));
    }
    return s;
  }
};

// Training targets: relevance >= threshold.
inline std::vector<PtExample> pt_examples(const Corpus& queries, const RelevanceTable& pt_relevance,
                                          double threshold) {
  std::vector<PtExample> out;
  for (const auto& q : queries.items) {
    const RelevanceRow* row = pt_relevance.find(q.id);
    if (!row) continue;
    PtExample e{q.id, q.tokens, {}, q.group.value_or("")};
    for (const auto& [t, p] : row->probs)
      if (p >= threshold) e.types.insert(t);
    if (!e.types.empty()) out.push_back(std::move(e));
  }
  return out;
}

inline std::set<std::string> predict_pt(const PtClassifier& clf, const std::vector<std::string>& tokens,
                                        double threshold) {
  std::set<std::string> out;
  const auto s = clf.scores(tokens);
  for (std::size_t c = 0; c < s.size(); ++c)
    if (s[c] >= threshold) out.insert(clf.product_types[c]);
  return out;
}

struct PtMetrics {
  Metrics overall;
  std::map<std::string, Metrics> per_group;
};

// Micro P/R/F1 over (query, product type) pairs, with per-group slices.
inline PtMetrics evaluate_pt(const PtClassifier& clf, const std::vector<PtExample>& examples, double threshold = 0.5) {
  SpanCounts total;
  std::map<std::string, SpanCounts> groups;
  for (const auto& e : examples) {
    const auto pred = predict_pt(clf, e.tokens, threshold);
    SpanCounts c;
    for (const auto& t : pred) (e.types.count(t) ? c.tp : c.fp) += 1;
    for (const auto& t : e.types) c.fn += pred.count(t) ? 0 : 1;
    total += c;
    groups[e.group] += c;
  }
  PtMetrics m;
  m.overall = finalize_metrics(total);
  for (const auto& [g, c] : groups) m.per_group[g] = finalize_metrics(c);
  return m;
}

// Mean binary cross-entropy over examples and product types.
inline double pt_loss(const PtClassifier& clf, const std::vector<PtExample>& examples) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& e : examples) {
    const auto s = clf.scores(e.tokens);
    for (std::size_t c = 0; c < s.size(); ++c, ++n) {
      const bool y = e.types.count(clf.product_types[c]) > 0;
      total -= std::log(std::max(y ? s[c] : 1.0 - s[c], 1e-300));
    }
  }
  return n == 0 ? 0.0 : total / double(n);
}

// BCE training with Adam; held-out loss on a seeded split drives early
// stopping.
inline PtClassifier train_pt_classifier(const std::vector<PtExample>& data, const PtConfig& cfg) {
  std::set<std::string> types;
  for (const auto& e : data) types.insert(e.types.begin(), e.types.end());
  if (types.size() < 2) fail("train_pt_classifier: need at least 2 product types, got ", types.size());
  PtClassifier clf;
  clf.product_types.assign(types.begin(), types.end());
  std::map<std::string, std::size_t> type_index;
  for (std::size_t i = 0; i < clf.product_types.size(); ++i) type_index[clf.product_types[i]] = i;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x97));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_hold = data.size() >= 10 ? std::size_t(double(data.size()) * cfg.holdout) : 0;
  std::vector<PtExample> held;
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_hold) held.push_back(data[order[i]]);
    else train_idx.push_back(order[i]);
  }
  for (std::size_t i : train_idx)
    for (const auto& t : data[i].tokens) clf.lexicon.add(t);

  const std::size_t d = cfg.embed, P = clf.product_types.size();
  clf.blocks.emplace_back("embedding", clf.lexicon.size(), d);
  clf.blocks.emplace_back("weight", d, P);
  clf.blocks.emplace_back("bias", 1, P);
  {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& x : clf.blocks[0].data) x = u(rng);
    const double g = std::sqrt(6.0 / double(d + P));
    std::uniform_real_distribution<double> w(-g, g);
    for (auto& x : clf.blocks[1].data) x = w(rng);
  }
  std::vector<std::vector<TokenId>> ids(data.size());
  for (std::size_t i : train_idx) ids[i] = clf.lexicon.encode(data[i].tokens);

  AdamState adam;
  ParameterSet grad = zeros_like(clf.blocks);
  PtClassifier best = clf;
  double best_loss = held.empty() ? 0.0 : pt_loss(clf, held);
  std::size_t bad = 0;
  std::vector<double> h(d), gh(d);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch) {
      const std::size_t end = std::min(train_idx.size(), start + cfg.batch);
      set_zero(grad);
      const double scale = 1.0 / double((end - start) * P);
      for (std::size_t bi = start; bi < end; ++bi) {
        const std::size_t i = train_idx[bi];
        const auto& x = ids[i];
        const Tensor& E = clf.blocks[0];
        const Tensor& W = clf.blocks[1];
        std::fill(h.begin(), h.end(), 0.0);
        for (TokenId id : x)
          for (std::size_t k = 0; k < d; ++k) h[k] += E.data[std::size_t(id) * d + k];
        const double inv = 1.0 / double(std::max<std::size_t>(1, x.size()));
        for (auto& v : h) v *= inv;
        std::fill(gh.begin(), gh.end(), 0.0);
        for (std::size_t c = 0; c < P; ++c) {
          double z = clf.blocks[2].data[c];
          for (std::size_t k = 0; k < d; ++k) z += h[k] * W.data[k * P + c];
          const double s = 1.0 / (1.0 + std::exp(-z));
          const double y = data[i].types.count(clf.product_types[c]) ? 1.0 : 0.0;
          const double gz = (s - y) * scale;
          grad[2].data[c] += gz;
          for (std::size_t k = 0; k < d; ++k) {
            grad[1].data[k * P + c] += gz * h[k];
            gh[k] += gz * W.data[k * P + c];
          }
        }
        for (TokenId id : x)
          for (std::size_t k = 0; k < d; ++k) grad[0].data[std::size_t(id) * d + k] += gh[k] * inv;
      }
      clf.blocks = adam_step(clf.blocks, grad, adam, cfg.lr);
    }
    if (held.empty()) {
      best = clf;
      continue;
    }
    const double loss = pt_loss(clf, held);
    if (loss < best_loss) {
      best_loss = loss;
      best = clf;
      bad = 0;
    } else if (++bad >= cfg.patience) {
      break;
    }
  }
  return best;
}

}  // namespace queaco
