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

// Synthetic e-commerce world: attribute catalog, products, strongly labeled
// queries, an untagged weak query pool with a latent gold layer, the weak
// labeling dictionary, planted surface-form corruptions and click logs.
//
// The weak dictionary is built so that exact matching reproduces a target
// token coverage, span precision and span recall: each catalog value is
// either indexed under its own type, indexed under a wrong type (a precision
// error) or not indexed at all (a recall error). The split is chosen over the
// expected mention frequencies of the values. Corrupted surface forms never
// match, which adds further recall loss.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "queaco/clicklog.hpp"
#include "queaco/corpus.hpp"
#include "queaco/weaklabel.hpp"

namespace queaco {

enum class CorruptionKind { misspell = 0, abbreviate = 1, variant = 2 };
inline constexpr std::array<CorruptionKind, 3> kCorruptionKinds = {
    CorruptionKind::misspell, CorruptionKind::abbreviate, CorruptionKind::variant};

inline std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::misspell: return "misspell";
    case CorruptionKind::abbreviate: return "abbreviate";
    case CorruptionKind::variant: return "variant";
  }
  return "?";
}

inline CorruptionKind corruption_from_string(const std::string& s) {
  if (s == "misspell") return CorruptionKind::misspell;
  if (s == "abbreviate") return CorruptionKind::abbreviate;
  if (s == "variant") return CorruptionKind::variant;
  fail("unknown corruption kind '", s, "'");
}

enum class IndexStatus { indexed, mistyped, unindexed };

inline std::string to_string(IndexStatus s) {
  switch (s) {
    case IndexStatus::indexed: return "indexed";
    case IndexStatus::mistyped: return "mistyped";
    case IndexStatus::unindexed: return "unindexed";
  }
  return "?";
}

inline IndexStatus index_status_from_string(const std::string& s) {
  if (s == "indexed") return IndexStatus::indexed;
  if (s == "mistyped") return IndexStatus::mistyped;
  if (s == "unindexed") return IndexStatus::unindexed;
  fail("unknown index status '", s, "'");
}

struct WorldConfig {
  std::size_t n_entity_types = 6;
  std::size_t values_per_type = 300;
  std::size_t n_products = 4000;
  std::size_t n_queries_strong = 2000;
  std::size_t n_queries_dev = 500;
  std::size_t n_queries_test = 1000;
  std::size_t n_queries_weak = 20000;
  double weak_coverage_target = 0.43;
  double weak_precision_target = 0.80;
  double weak_recall_target = 0.48;
  std::map<CorruptionKind, double> corruption_rates = {{CorruptionKind::misspell, 0.04},
                                                       {CorruptionKind::abbreviate, 0.03},
                                                       {CorruptionKind::variant, 0.03}};
  std::size_t n_groups = 4;
  std::uint64_t seed = 7;
  double zipf_exponent = 1.0;
  double filler_rate = 0.15;
  // Share of queries whose mentions follow the usual slot order (brand,
  // color, material, pattern, style, product type, audience, size); the rest
  // are shuffled.
  double ordered_rate = 0.8;
  // Chance that an audience mention is preceded by "for".
  double audience_cue_rate = 0.5;
  // Named cases (mk -> Michael Kors, 32 -> 32 inch / 32 gallon,
  // ...) plus random planted pairs for normalization experiments.
  bool plant_cases = true;
  std::size_t random_planted_per_kind = 8;
  std::size_t planted_queries_per_pair = 12;

  void validate() const {
    auto frac = [](const char* name, double v) {
      if (!(v >= 0.0 && v <= 1.0)) fail("world config '", name, "' must be in [0,1], got ", v);
    };
    auto count = [](const char* name, std::size_t v) {
      if (v < 1) fail("world config '", name, "' must be >= 1");
    };
    count("n_entity_types", n_entity_types);
    count("values_per_type", values_per_type);
    count("n_products", n_products);
    count("n_queries_strong", n_queries_strong);
    count("n_queries_weak", n_queries_weak);
    count("n_groups", n_groups);
    frac("weak_coverage_target", weak_coverage_target);
    frac("weak_precision_target", weak_precision_target);
    frac("weak_recall_target", weak_recall_target);
    frac("filler_rate", filler_rate);
    frac("ordered_rate", ordered_rate);
    frac("audience_cue_rate", audience_cue_rate);
    double total = 0;
    for (const auto& [k, v] : corruption_rates) {
      frac(("corruption_rates." + to_string(k)).c_str(), v);
      total += v;
    }
    if (total > 1.0) fail("corruption rates sum to more than 1");
    if (n_entity_types < 2) fail("world config 'n_entity_types' must be >= 2 (brand, product_type)");
    if (n_entity_types > 8) fail("world config 'n_entity_types' must be <= 8");
    if (values_per_type < 2) fail("values_per_type = ", values_per_type, " is too small: need >= 2");
  }
};

inline nlohmann::json world_config_to_json(const WorldConfig& c) {
  nlohmann::json rates;
  for (const auto& [k, v] : c.corruption_rates) rates[to_string(k)] = v;
  return {{"n_entity_types", c.n_entity_types},
          {"values_per_type", c.values_per_type},
          {"n_products", c.n_products},
          {"n_queries_strong", c.n_queries_strong},
          {"n_queries_dev", c.n_queries_dev},
          {"n_queries_test", c.n_queries_test},
          {"n_queries_weak", c.n_queries_weak},
          {"weak_coverage_target", c.weak_coverage_target},
          {"weak_precision_target", c.weak_precision_target},
          {"weak_recall_target", c.weak_recall_target},
          {"corruption_rates", rates},
          {"n_groups", c.n_groups},
          {"seed", c.seed},
          {"zipf_exponent", c.zipf_exponent},
          {"filler_rate", c.filler_rate},
          {"ordered_rate", c.ordered_rate},
          {"audience_cue_rate", c.audience_cue_rate},
          {"plant_cases", c.plant_cases},
          {"random_planted_per_kind", c.random_planted_per_kind},
          {"planted_queries_per_pair", c.planted_queries_per_pair}};
}

// Keys absent from `j` keep their defaults; unknown keys are rejected.
inline WorldConfig world_config_from_json(const nlohmann::json& j, WorldConfig c = {}) {
  const auto known = world_config_to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) fail("unknown world config key '", key, "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_entity_types", c.n_entity_types);
  get("values_per_type", c.values_per_type);
  get("n_products", c.n_products);
  get("n_queries_strong", c.n_queries_strong);
  get("n_queries_dev", c.n_queries_dev);
  get("n_queries_test", c.n_queries_test);
  get("n_queries_weak", c.n_queries_weak);
  get("weak_coverage_target", c.weak_coverage_target);
  get("weak_precision_target", c.weak_precision_target);
  get("weak_recall_target", c.weak_recall_target);
  get("n_groups", c.n_groups);
  get("seed", c.seed);
  get("zipf_exponent", c.zipf_exponent);
  get("filler_rate", c.filler_rate);
  get("ordered_rate", c.ordered_rate);
  get("audience_cue_rate", c.audience_cue_rate);
  get("plant_cases", c.plant_cases);
  get("random_planted_per_kind", c.random_planted_per_kind);
  get("planted_queries_per_pair", c.planted_queries_per_pair);
  if (j.contains("corruption_rates"))
    for (const auto& [k, v] : j.at("corruption_rates").items())
      c.corruption_rates[corruption_from_string(k)] = v.get<double>();
  c.validate();
  return c;
}

struct CatalogValue {
  std::string canonical;
  std::vector<std::string> tokens;
  // Product types this value can occur with; empty means any.
  std::vector<std::string> product_types;
  // Fixed corrupted surface form per kind (absent when the rule does not apply).
  std::map<CorruptionKind, std::vector<std::string>> corrupted;
  IndexStatus index = IndexStatus::indexed;
  int mistyped_as = -1;
};

struct Catalog {
  TagVocab vocab;
  // values[type] in popularity order (rank 0 most popular).
  std::vector<std::vector<CatalogValue>> values;

  int product_type_index() const { return vocab.type_index("product_type"); }
  const CatalogValue* find(int type, const std::string& canonical) const {
    for (const auto& v : values[std::size_t(type)])
      if (v.canonical == canonical) return &v;
    return nullptr;
  }
  std::map<std::string, std::vector<std::string>> canonical_values() const {
    std::map<std::string, std::vector<std::string>> out;
    for (std::size_t t = 0; t < values.size(); ++t)
      for (const auto& v : values[t]) out[vocab.entity_types()[t]].push_back(v.canonical);
    return out;
  }
};

struct ProductRecord {
  std::string product_id;
  std::map<std::string, std::string> attributes;  // entity type -> canonical value

  bool operator==(const ProductRecord&) const = default;
};

// A surface form planted with a known canonical target under one product
// type. Context-dependent pairs share their surface with another pair.
struct PlantedPair {
  std::string entity_type;
  std::string surface;
  std::string context;
  std::string canonical;
  std::string kind;
  bool context_dependent = false;
};

// Queries whose product types come only from behavior (no product type
// mention), e.g. a title that maps to "movie" or a theme that spans two types.
struct PlantedTypeCase {
  std::vector<std::string> tokens;
  std::vector<std::string> product_types;
};

// Latent intent of one query: clicked targets and their share of clicks.
struct QueryIntent {
  std::string query_id;
  std::vector<std::string> tokens;
  std::vector<std::pair<std::string, double>> targets;
};

struct World {
  WorldConfig config;
  Catalog catalog;
  std::vector<ProductRecord> products;
  AttributeDictionary dictionary;
  Corpus strong;
  Corpus dev;
  Corpus test;
  // Weak pool with its latent gold tags (never shown to training).
  Corpus weak_gold;
  std::vector<QueryIntent> intents;
  std::vector<PlantedPair> planted;
  std::vector<PlantedTypeCase> planted_types;

  // The weak pool as observed: same queries, all tags O.
  Corpus weak_pool() const {
    Corpus c = weak_gold;
    for (auto& q : c.items) {
      std::fill(q.tags.begin(), q.tags.end(), kOutsideTag);
      q.provenance = Provenance::weak;
    }
    return c;
  }
};

inline const std::vector<std::string>& entity_type_names() {
  static const std::vector<std::string> names = {"brand",    "product_type", "size",  "color",
                                                 "audience", "material",     "style", "pattern"};
  return names;
}

namespace synth_detail {

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t pick(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline std::size_t pick_weighted(Rng& rng, const std::vector<double>& w) {
  double total = 0;
  for (double x : w) total += x;
  double r = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    r -= w[i];
    if (r < 0) return i;
  }
  return w.size() - 1;
}

inline const std::vector<std::string>& fillers() {
  static const std::vector<std::string> f = {"for", "with", "and", "new", "best", "cheap", "sale", "the", "on", "deal"};
  return f;
}

inline int slot_rank(const std::string& type) {
  static const std::map<std::string, int> r = {{"brand", 0},    {"color", 1},        {"material", 2},
                                               {"pattern", 3},  {"style", 4},        {"product_type", 5},
                                               {"audience", 6}, {"size", 7}};
  return r.at(type);
}

inline double mention_prob(const std::string& type) {
  static const std::map<std::string, double> p = {
      {"brand", 0.65},    {"product_type", 0.8}, {"size", 0.35},  {"color", 0.3},
      {"audience", 0.3},  {"material", 0.25},    {"style", 0.2},  {"pattern", 0.2}};
  return p.at(type);
}

inline double presence_prob(const std::string& type) {
  static const std::map<std::string, double> p = {
      {"brand", 1.0},      {"product_type", 1.0}, {"size", 0.75}, {"color", 0.8},
      {"audience", 0.55},  {"material", 0.55},    {"style", 0.4}, {"pattern", 0.4}};
  return p.at(type);
}

struct Seed {
  std::string canonical;
  std::vector<std::string> product_types;
  std::map<CorruptionKind, std::string> corrupted;
};

// Named values used by the planted cases.
inline std::map<std::string, std::vector<Seed>> named_seeds() {
  using K = CorruptionKind;
  return {
      {"brand",
       {{"Michael Kors", {"watch", "handbag"}, {{K::abbreviate, "mk"}, {K::misspell, "micheal kors"}}},
        {"Levi's", {"jeans"}, {{K::misspell, "levi"}}},
        {"Western Digital", {"hard drive"}, {{K::abbreviate, "wd"}}},
        {"LG", {"television"}, {}},
        {"apple barrel", {"craft paint"}, {{K::variant, "apple"}}},
        {"Apple computer", {"computer"}, {{K::variant, "apple"}}},
        {"wonder woman 1984", {"movie"}, {}},
        {"unicorn", {"clothes", "toys"}, {}}}},
      {"product_type",
       {{"watch", {}, {}},      {"handbag", {}, {}},     {"jeans", {}, {}},
        {"hard drive", {}, {}}, {"television", {}, {}},  {"craft paint", {}, {}},
        {"computer", {}, {}},   {"movie", {}, {}},       {"clothes", {}, {}},
        {"toys", {}, {}},       {"fish tank", {}, {}},   {"rug", {}, {}},
        {"socks", {}, {}},      {"picture frame", {}, {}}, {"air filter", {}, {}}}},
      {"size",
       {{"32 inch", {"television"}, {{K::variant, "32"}}},
        {"32 gallon", {"fish tank"}, {{K::variant, "32"}}},
        {"3x5", {"rug"}, {{K::variant, "3 by 5"}}},
        {"8 inches", {"picture frame"}, {{K::variant, "8 in"}}},
        {"Value Pack (2)", {"air filter"}, {{K::variant, "2 pack"}}}}},
      {"audience", {{"women", {}, {{K::misspell, "womans"}}}}},
  };
}

inline std::vector<PlantedPair> named_planted_pairs() {
  return {
      {"brand", "mk", "watch", "Michael Kors", "abbreviate", false},
      {"brand", "micheal kors", "handbag", "Michael Kors", "misspell", false},
      {"brand", "levi", "jeans", "Levi's", "misspell", false},
      {"brand", "wd", "hard drive", "Western Digital", "abbreviate", false},
      {"audience", "womans", "socks", "women", "misspell", false},
      {"size", "3 by 5", "rug", "3x5", "variant", false},
      {"size", "8 in", "picture frame", "8 inches", "variant", false},
      {"size", "2 pack", "air filter", "Value Pack (2)", "variant", false},
      {"size", "32", "television", "32 inch", "variant", true},
      {"size", "32", "fish tank", "32 gallon", "variant", true},
      {"brand", "apple", "craft paint", "apple barrel", "variant", true},
      {"brand", "apple", "computer", "Apple computer", "variant", true},
  };
}

class WordMaker {
 public:
  explicit WordMaker(std::unordered_set<std::string>& used) : used_(used) {}

  std::string word(Rng& rng) {
    static const std::string cons = "bcdfghjklmnprstvz";
    static const std::string vows = "aeiou";
    for (;;) {
      std::string w;
      const std::size_t syl = 2 + pick(rng, 2);
      for (std::size_t s = 0; s < syl; ++s) {
        w += cons[pick(rng, cons.size())];
        w += vows[pick(rng, vows.size())];
      }
      if (uniform01(rng) < 0.3) w += cons[pick(rng, cons.size())];
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::unordered_set<std::string>& used_;
};

inline const std::map<std::string, std::string>& unit_abbreviations() {
  static const std::map<std::string, std::string> u = {
      {"inch", "in"},  {"inches", "in"}, {"gallon", "gal"}, {"ounce", "oz"}, {"pack", "pk"},
      {"foot", "ft"},  {"pound", "lb"},  {"count", "ct"},   {"liter", "l"},  {"yard", "yd"}};
  return u;
}

inline bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

inline std::vector<std::string> make_misspelling(Rng& rng, const std::vector<std::string>& tokens) {
  std::vector<std::size_t> cands;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].size() >= 3 && !is_number(tokens[i])) cands.push_back(i);
  if (cands.empty()) return {};
  auto out = tokens;
  std::string& w = out[cands[pick(rng, cands.size())]];
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  const std::string orig = w;
  for (int attempt = 0; attempt < 20 && w == orig; ++attempt) {
    w = orig;
    const std::size_t pos = 1 + pick(rng, w.size() - 1);  // keep the first letter
    switch (pick(rng, 4)) {
      case 0:  // transpose
        if (pos + 1 < w.size()) std::swap(w[pos], w[pos + 1]);
        break;
      case 1: w.erase(pos, 1); break;
      case 2: w[pos] = letters[pick(rng, letters.size())]; break;
      default: w.insert(w.begin() + long(pos), letters[pick(rng, letters.size())]); break;
    }
  }
  if (w == orig) return {};
  return out;
}

inline std::vector<std::string> make_abbreviation(const std::vector<std::string>& tokens) {
  if (tokens.size() >= 2) {
    std::string a;
    for (const auto& t : tokens) a += t[0];
    return {a};
  }
  if (tokens.size() == 1 && tokens[0].size() >= 5 && !is_number(tokens[0]))
    return {tokens[0].substr(0, 3)};
  return {};
}

inline std::vector<std::string> make_variant(const std::vector<std::string>& tokens) {
  if (tokens.size() == 1) {
    const std::string& t = tokens[0];
    auto x = t.find('x');
    if (x != std::string::npos && x > 0 && is_number(t.substr(0, x)) && is_number(t.substr(x + 1)))
      return {t.substr(0, x), "by", t.substr(x + 1)};
    auto ap = t.find('\'');
    if (ap != std::string::npos) {
      std::string v = t;
      v.erase(ap, 1);
      return {v};
    }
    auto hy = t.find('-');
    if (hy != std::string::npos && hy > 0 && hy + 1 < t.size()) return {t.substr(0, hy), t.substr(hy + 1)};
    return {};
  }
  if (tokens.size() == 2 && is_number(tokens[0])) {
    auto it = unit_abbreviations().find(tokens[1]);
    if (it != unit_abbreviations().end()) return {tokens[0], it->second};
    return {};
  }
  std::string joined;
  for (const auto& t : tokens) joined += t;
  return {joined};
}

// Zipf weights over ranks 1..n.
inline std::vector<double> zipf_weights(std::size_t n, double s) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(double(i + 1), s);
  return w;
}

inline Catalog build_catalog(const WorldConfig& cfg, Rng& rng) {
  std::vector<std::string> types(entity_type_names().begin(),
                                 entity_type_names().begin() + long(cfg.n_entity_types));
  Catalog cat;
  cat.vocab = TagVocab(types);
  cat.values.resize(types.size());

  std::unordered_set<std::string> used_words(fillers().begin(), fillers().end());
  for (const auto& t : {"by", "in", "gal", "oz", "pk", "ft", "lb", "ct", "l", "yd"}) used_words.insert(t);
  std::unordered_set<std::string> used_canonical;
  WordMaker words(used_words);

  const auto seeds = named_seeds();
  // Product types first: other types draw their allowed product types from them.
  std::vector<std::size_t> order;
  order.push_back(std::size_t(cat.vocab.type_index("product_type")));
  for (std::size_t t = 0; t < types.size(); ++t)
    if (types[t] != "product_type") order.push_back(t);

  for (std::size_t t : order) {
    const std::string& type = types[t];
    auto& vals = cat.values[t];
    if (cfg.plant_cases && seeds.count(type)) {
      for (const auto& s : seeds.at(type)) {
        CatalogValue v;
        v.canonical = s.canonical;
        v.tokens = tokenize(s.canonical);
        v.product_types = s.product_types;
        for (const auto& [k, surf] : s.corrupted) v.corrupted[k] = tokenize(surf);
        for (const auto& tok : v.tokens) used_words.insert(tok);
        used_canonical.insert(to_lower(s.canonical));
        vals.push_back(std::move(v));
      }
      if (vals.size() > cfg.values_per_type)
        fail("values_per_type = ", cfg.values_per_type, " is too small for the planted cases of type '",
             type, "' (need >= ", vals.size(), ")");
    }
    static const std::vector<std::string> units = {"inch", "gallon", "ounce", "pack", "foot",
                                                   "pound", "count", "liter", "yard"};
    std::size_t guard = 0;
    while (vals.size() < cfg.values_per_type) {
      if (++guard > cfg.values_per_type * 200) fail("could not generate distinct values for '", type, "'");
      std::vector<std::string> toks;
      const double r = uniform01(rng);
      if (type == "size") {
        if (r < 0.3) {
          toks = {std::to_string(1 + pick(rng, 12)) + "x" + std::to_string(1 + pick(rng, 12))};
        } else {
          toks = {std::to_string(1 + pick(rng, 99)), units[pick(rng, units.size())]};
        }
      } else {
        std::size_t n = 1;
        if (type == "brand") n = r < 0.6 ? 1 : (r < 0.95 ? 2 : 3);
        else if (type == "product_type") n = r < 0.6 ? 1 : 2;
        else if (type == "audience") n = 1;
        else n = r < 0.75 ? 1 : 2;
        for (std::size_t i = 0; i < n; ++i) toks.push_back(words.word(rng));
      }
      std::string canon = join(toks);
      if (!used_canonical.insert(canon).second) continue;
      CatalogValue v;
      v.canonical = canon;
      v.tokens = toks;
      vals.push_back(std::move(v));
    }
    // Seeds land at random popularity ranks.
    std::shuffle(vals.begin(), vals.end(), rng);
  }

  // Allowed product types.
  const std::size_t pt = std::size_t(cat.product_type_index());
  std::vector<std::string> pt_names;
  for (const auto& v : cat.values[pt]) pt_names.push_back(v.canonical);
  for (std::size_t t = 0; t < types.size(); ++t) {
    if (t == pt || (types[t] != "brand" && types[t] != "size")) continue;
    for (auto& v : cat.values[t]) {
      if (!v.product_types.empty()) continue;
      const std::size_t n = 1 + pick(rng, types[t] == "brand" ? 3 : 4);
      std::set<std::string> chosen;
      while (chosen.size() < std::min(n, pt_names.size())) chosen.insert(pt_names[pick(rng, pt_names.size())]);
      v.product_types.assign(chosen.begin(), chosen.end());
    }
  }

  // Fixed corrupted forms; drop any that collide with another surface.
  std::unordered_map<std::string, int> surface_uses;
  for (const auto& vals : cat.values)
    for (const auto& v : vals) ++surface_uses[join(v.tokens)];
  for (auto& vals : cat.values) {
    for (auto& v : vals) {
      for (CorruptionKind k : kCorruptionKinds) {
        if (v.corrupted.count(k)) continue;
        std::vector<std::string> form;
        if (k == CorruptionKind::misspell) form = make_misspelling(rng, v.tokens);
        if (k == CorruptionKind::abbreviate) form = make_abbreviation(v.tokens);
        if (k == CorruptionKind::variant) form = make_variant(v.tokens);
        if (form.empty() || form == v.tokens) continue;
        v.corrupted[k] = form;
      }
    }
  }
  std::unordered_map<std::string, int> corrupted_uses;
  for (const auto& vals : cat.values)
    for (const auto& v : vals)
      for (const auto& [k, f] : v.corrupted) ++corrupted_uses[join(f)];
  std::unordered_set<std::string> planted_surfaces;
  if (cfg.plant_cases)
    for (const auto& p : named_planted_pairs()) planted_surfaces.insert(p.surface);
  for (auto& vals : cat.values) {
    for (auto& v : vals) {
      for (auto it = v.corrupted.begin(); it != v.corrupted.end();) {
        const std::string s = join(it->second);
        const bool shared = corrupted_uses[s] > 1 && !planted_surfaces.count(s);
        const bool collides = surface_uses.count(s) > 0;
        bool word_clash = false;
        for (const auto& tok : it->second)
          word_clash |= std::find(fillers().begin(), fillers().end(), tok) != fillers().end();
        if (shared || collides || word_clash) it = v.corrupted.erase(it);
        else ++it;
      }
    }
  }
  return cat;
}

inline bool allows(const CatalogValue& v, const std::string& pt) {
  return v.product_types.empty() ||
         std::find(v.product_types.begin(), v.product_types.end(), pt) != v.product_types.end();
}

inline std::vector<ProductRecord> build_products(const WorldConfig& cfg, const Catalog& cat, Rng& rng) {
  const auto& types = cat.vocab.entity_types();
  const std::size_t pt = std::size_t(cat.product_type_index());
  const auto pt_weights = zipf_weights(cat.values[pt].size(), cfg.zipf_exponent * 0.6);

  // Per product type, candidate value indices with Zipf weights by rank.
  std::map<std::string, std::vector<std::vector<std::size_t>>> allowed;
  std::map<std::string, std::vector<std::vector<double>>> weights;
  for (const auto& ptv : cat.values[pt]) {
    auto& al = allowed[ptv.canonical];
    auto& wt = weights[ptv.canonical];
    al.resize(types.size());
    wt.resize(types.size());
    for (std::size_t t = 0; t < types.size(); ++t) {
      if (t == pt) continue;
      for (std::size_t i = 0; i < cat.values[t].size(); ++i) {
        if (!allows(cat.values[t][i], ptv.canonical)) continue;
        al[t].push_back(i);
        wt[t].push_back(1.0 / std::pow(double(i + 1), cfg.zipf_exponent));
      }
    }
  }

  std::vector<ProductRecord> products;
  std::set<std::map<std::string, std::string>> seen;
  auto add = [&](std::map<std::string, std::string> attrs) {
    if (!seen.insert(attrs).second) return false;
    char id[32];
    std::snprintf(id, sizeof id, "p%05zu", products.size());
    products.push_back({id, std::move(attrs)});
    return true;
  };

  // Every named planted (value, product type) pair needs a product.
  if (cfg.plant_cases) {
    for (const auto& [type, seeds] : named_seeds()) {
      auto t = cat.vocab.find_type(type);
      if (!t) continue;
      for (const auto& s : seeds) {
        std::vector<std::string> pts = s.product_types;
        if (pts.empty()) pts = {"socks"};
        for (const auto& p : pts) {
          std::map<std::string, std::string> attrs{{"product_type", p}, {type, s.canonical}};
          if (type != "brand") {
            const auto& al = allowed[p][std::size_t(cat.vocab.type_index("brand"))];
            if (!al.empty()) attrs["brand"] = cat.values[std::size_t(cat.vocab.type_index("brand"))][al[0]].canonical;
          }
          add(std::move(attrs));
        }
      }
    }
  }

  std::size_t guard = 0;
  while (products.size() < cfg.n_products) {
    if (++guard > cfg.n_products * 50)
      fail("values_per_type = ", cfg.values_per_type, " is too small to produce ", cfg.n_products,
           " distinct products");
    const std::string& ptname = cat.values[pt][pick_weighted(rng, pt_weights)].canonical;
    std::map<std::string, std::string> attrs{{"product_type", ptname}};
    for (std::size_t t = 0; t < types.size(); ++t) {
      if (t == pt) continue;
      const auto& al = allowed[ptname][t];
      if (al.empty()) continue;
      if (uniform01(rng) >= presence_prob(types[t])) continue;
      attrs[types[t]] = cat.values[t][al[pick_weighted(rng, weights[ptname][t])]].canonical;
    }
    add(std::move(attrs));
  }
  return products;
}

struct ValueKey {
  std::size_t type;
  std::size_t index;
};

// Expected statistics of one catalog value per generated query.
struct ValueExpectation {
  double mentions = 0;       // expected mentions per query
  double clean_mentions = 0; // rendered in canonical form
  double clean_tokens = 0;
  double gold_tokens = 0;
};

inline double corruption_mass(const WorldConfig& cfg, const CatalogValue& v) {
  double c = 0;
  for (const auto& [k, r] : cfg.corruption_rates)
    if (v.corrupted.count(k)) c += r;
  return c;
}

inline std::vector<std::vector<ValueExpectation>> expectations(const WorldConfig& cfg, const Catalog& cat,
                                                               const std::vector<ProductRecord>& products) {
  const auto& types = cat.vocab.entity_types();
  std::vector<std::unordered_map<std::string, std::size_t>> index(types.size());
  for (std::size_t t = 0; t < types.size(); ++t)
    for (std::size_t i = 0; i < cat.values[t].size(); ++i) index[t][cat.values[t][i].canonical] = i;
  std::vector<std::vector<ValueExpectation>> ex(types.size());
  for (std::size_t t = 0; t < types.size(); ++t) ex[t].resize(cat.values[t].size());
  const double per_product = 1.0 / double(products.size());
  for (const auto& p : products) {
    for (const auto& [type, val] : p.attributes) {
      const std::size_t t = std::size_t(cat.vocab.type_index(type));
      const std::size_t i = index[t].at(val);
      ex[t][i].mentions += per_product * mention_prob(type);
    }
  }
  for (std::size_t t = 0; t < types.size(); ++t) {
    for (std::size_t i = 0; i < cat.values[t].size(); ++i) {
      const auto& v = cat.values[t][i];
      auto& e = ex[t][i];
      const double c = corruption_mass(cfg, v);
      e.clean_mentions = e.mentions * (1 - c);
      e.clean_tokens = e.clean_mentions * double(v.tokens.size());
      double corrupted_tokens = 0;
      for (const auto& [k, f] : v.corrupted) corrupted_tokens += cfg.corruption_rates.at(k) * double(f.size());
      e.gold_tokens = e.clean_tokens + e.mentions * corrupted_tokens;
    }
  }
  return ex;
}

// Chooses the index status of every value so that expected weak coverage,
// span precision and span recall match the configured targets.
inline void assign_index_status(const WorldConfig& cfg, Catalog& cat,
                                const std::vector<std::vector<ValueExpectation>>& ex, Rng& rng) {
  std::vector<ValueKey> keys;
  double total_mentions = 0, total_tokens = cfg.filler_rate;
  for (std::size_t t = 0; t < ex.size(); ++t)
    for (std::size_t i = 0; i < ex[t].size(); ++i) {
      keys.push_back({t, i});
      total_mentions += ex[t][i].mentions;
      total_tokens += ex[t][i].gold_tokens;
      if (cat.vocab.entity_types()[t] == "audience") total_tokens += ex[t][i].mentions * cfg.audience_cue_rate;
    }
  const double P = std::max(cfg.weak_precision_target, 1e-6);
  const double token_target = cfg.weak_coverage_target * total_tokens;
  const double span_target = cfg.weak_recall_target * total_mentions / P;

  std::vector<char> matched(keys.size(), 0);
  double tok = 0, spn = 0;
  auto cost = [&](double t, double s) {
    const double a = (token_target - t) / std::max(token_target, 1e-12);
    const double b = (span_target - s) / std::max(span_target, 1e-12);
    return 4 * a * a + b * b;
  };
  std::vector<std::size_t> order(keys.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int pass = 0; pass < 4; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t o : order) {
      const auto& e = ex[keys[o].type][keys[o].index];
      const double sign = matched[o] ? -1.0 : 1.0;
      const double nt = tok + sign * e.clean_tokens, ns = spn + sign * e.clean_mentions;
      if (cost(nt, ns) < cost(tok, spn)) {
        matched[o] = !matched[o];
        tok = nt;
        spn = ns;
      }
    }
  }

  // Within the matched set, a share (1 - P) of span mass is mistyped.
  const double mistyped_target = (1 - P) * spn;
  double mistyped = 0;
  std::vector<char> wrong(keys.size(), 0);
  for (int pass = 0; pass < 4; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t o : order) {
      if (!matched[o]) continue;
      const double m = ex[keys[o].type][keys[o].index].clean_mentions;
      const double next = wrong[o] ? mistyped - m : mistyped + m;
      if (std::abs(mistyped_target - next) < std::abs(mistyped_target - mistyped)) {
        wrong[o] = !wrong[o];
        mistyped = next;
      }
    }
  }

  const std::size_t n_types = cat.values.size();
  for (std::size_t o = 0; o < keys.size(); ++o) {
    auto& v = cat.values[keys[o].type][keys[o].index];
    if (!matched[o]) {
      v.index = IndexStatus::unindexed;
      v.mistyped_as = -1;
    } else if (wrong[o]) {
      v.index = IndexStatus::mistyped;
      std::size_t other = pick(rng, n_types - 1);
      if (other >= keys[o].type) ++other;
      v.mistyped_as = int(other);
    } else {
      v.index = IndexStatus::indexed;
      v.mistyped_as = -1;
    }
  }
}

inline AttributeDictionary build_dictionary(const Catalog& cat) {
  AttributeDictionary dict(cat.vocab);
  for (std::size_t t = 0; t < cat.values.size(); ++t) {
    for (const auto& v : cat.values[t]) {
      if (v.index == IndexStatus::indexed) dict.add(int(t), v.tokens);
      else if (v.index == IndexStatus::mistyped) dict.add(v.mistyped_as, v.tokens);
    }
  }
  return dict;
}

struct Mention {
  int type;
  std::vector<std::string> surface;
};

inline std::vector<std::string> render(const WorldConfig& cfg, const CatalogValue& v, Rng& rng) {
  double r = uniform01(rng);
  for (CorruptionKind k : kCorruptionKinds) {
    auto rate = cfg.corruption_rates.find(k);
    if (rate == cfg.corruption_rates.end()) continue;
    if (r < rate->second) {
      auto it = v.corrupted.find(k);
      return it == v.corrupted.end() ? v.tokens : it->second;
    }
    r -= rate->second;
  }
  return v.tokens;
}

inline LabeledQuery compose(const Catalog& cat, std::vector<Mention> mentions, const WorldConfig& cfg,
                            Rng& rng, std::string id, std::string group) {
  if (uniform01(rng) < cfg.ordered_rate) {
    std::stable_sort(mentions.begin(), mentions.end(), [&](const Mention& a, const Mention& b) {
      return slot_rank(cat.vocab.entity_types()[std::size_t(a.type)]) <
             slot_rank(cat.vocab.entity_types()[std::size_t(b.type)]);
    });
  } else {
    std::shuffle(mentions.begin(), mentions.end(), rng);
  }
  std::vector<Span> spans;
  std::vector<std::string> tokens;
  const bool filler = uniform01(rng) < cfg.filler_rate;
  const std::size_t filler_slot = filler ? pick(rng, mentions.size() + 1) : std::size_t(-1);
  for (std::size_t i = 0; i <= mentions.size(); ++i) {
    if (i == filler_slot) tokens.push_back(fillers()[pick(rng, fillers().size())]);
    if (i == mentions.size()) break;
    if (cat.vocab.entity_types()[std::size_t(mentions[i].type)] == "audience" &&
        uniform01(rng) < cfg.audience_cue_rate)
      tokens.push_back("for");
    const int start = int(tokens.size());
    for (const auto& t : mentions[i].surface) tokens.push_back(t);
    spans.push_back({start, int(tokens.size()) - 1, mentions[i].type});
  }
  LabeledQuery q;
  q.id = std::move(id);
  q.tags = encode_bio(cat.vocab, spans, tokens.size());
  q.tokens = std::move(tokens);
  q.provenance = Provenance::strong;
  q.group = std::move(group);
  return q;
}

struct Generator {
  const WorldConfig& cfg;
  const Catalog& cat;
  const std::vector<ProductRecord>& products;
  std::vector<std::unordered_map<std::string, std::size_t>> index;
  std::vector<double> group_weights;

  Generator(const WorldConfig& c, const Catalog& k, const std::vector<ProductRecord>& p)
      : cfg(c), cat(k), products(p), index(k.values.size()),
        group_weights(zipf_weights(c.n_groups, 1.0)) {
    for (std::size_t t = 0; t < cat.values.size(); ++t)
      for (std::size_t i = 0; i < cat.values[t].size(); ++i) index[t][cat.values[t][i].canonical] = i;
  }

  const CatalogValue& value(int type, const std::string& canonical) const {
    return cat.values[std::size_t(type)][index[std::size_t(type)].at(canonical)];
  }

  std::string group(Rng& rng) const { return "g" + std::to_string(pick_weighted(rng, group_weights)); }

  // One query for product `p`; `forced` mentions replace the sampled ones
  // of their type.
  LabeledQuery query(std::size_t p, std::string id, Rng& rng,
                     const std::vector<Mention>& forced = {}) const {
    const auto& prod = products[p];
    std::vector<Mention> mentions;
    std::set<int> forced_types;
    for (const auto& m : forced) forced_types.insert(m.type);
    for (int attempt = 0; mentions.empty() && attempt < 50; ++attempt) {
      for (const auto& [type, val] : prod.attributes) {
        const int t = cat.vocab.type_index(type);
        if (forced_types.count(t)) continue;
        if (uniform01(rng) >= mention_prob(type)) continue;
        mentions.push_back({t, render(cfg, value(t, val), rng)});
      }
      if (!forced.empty()) break;
    }
    for (const auto& m : forced) mentions.push_back(m);
    if (mentions.empty()) {
      const int t = cat.product_type_index();
      mentions.push_back({t, value(t, prod.attributes.at("product_type")).tokens});
    }
    return compose(cat, std::move(mentions), cfg, rng, std::move(id), group(rng));
  }
};

inline std::string make_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06zu", prefix, i);
  return buf;
}

}  // namespace synth_detail

inline World generate_world(const WorldConfig& config) {
  using namespace synth_detail;
  config.validate();
  World w;
  w.config = config;
  Rng cat_rng(mix_seed(config.seed, 1));
  w.catalog = build_catalog(config, cat_rng);
  Rng prod_rng(mix_seed(config.seed, 2));
  w.products = build_products(config, w.catalog, prod_rng);
  const auto ex = expectations(config, w.catalog, w.products);
  Rng idx_rng(mix_seed(config.seed, 3));
  assign_index_status(config, w.catalog, ex, idx_rng);
  w.dictionary = build_dictionary(w.catalog);

  // Planted surface forms.
  std::vector<PlantedPair> planted;
  if (config.plant_cases) {
    for (const auto& pp : named_planted_pairs())
      if (w.catalog.vocab.find_type(pp.entity_type)) planted.push_back(pp);
  }
  Rng plant_rng(mix_seed(config.seed, 4));
  if (config.random_planted_per_kind > 0) {
    std::set<std::string> used_surfaces;
    for (const auto& pp : planted) used_surfaces.insert(pp.surface);
    for (CorruptionKind k : kCorruptionKinds) {
      std::size_t added = 0;
      for (int attempt = 0; attempt < 2000 && added < config.random_planted_per_kind; ++attempt) {
        const std::size_t t = pick(plant_rng, w.catalog.values.size());
        if (int(t) == w.catalog.product_type_index()) continue;
        const auto& v = w.catalog.values[t][pick(plant_rng, w.catalog.values[t].size())];
        auto it = v.corrupted.find(k);
        if (it == v.corrupted.end()) continue;
        const std::string surface = join(it->second);
        if (!used_surfaces.insert(surface).second) continue;
        // Context: product type of some product carrying the value.
        std::vector<std::size_t> carriers;
        for (std::size_t p = 0; p < w.products.size(); ++p) {
          auto a = w.products[p].attributes.find(w.catalog.vocab.entity_types()[t]);
          if (a != w.products[p].attributes.end() && a->second == v.canonical) carriers.push_back(p);
        }
        if (carriers.empty()) continue;
        const auto& ctx = w.products[carriers[pick(plant_rng, carriers.size())]].attributes.at("product_type");
        planted.push_back({w.catalog.vocab.entity_types()[t], surface, ctx, v.canonical, to_string(k), false});
        ++added;
      }
    }
  }
  Generator gen(config, w.catalog, w.products);
  // Each query draws from its own sub-seed so pools can be generated in shards.
  auto pool = [&](char prefix, std::size_t n, std::uint64_t stream) {
    std::vector<LabeledQuery> items;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(mix_seed(mix_seed(config.seed, stream), i));
      const std::size_t p = pick(rng, w.products.size());
      items.push_back(gen.query(p, make_id(prefix, i), rng));
      w.intents.push_back({items.back().id, items.back().tokens, {{w.products[p].product_id, 1.0}}});
    }
    return items;
  };
  // Planted queries count towards the configured pool sizes.
  const std::size_t strong_per_pair = std::max<std::size_t>(
      1, std::size_t(std::ceil(double(config.planted_queries_per_pair) * double(config.n_queries_strong) /
                               double(config.n_queries_weak))));
  const std::size_t type_cases = config.plant_cases ? 2 : 0;
  const std::size_t planted_strong = planted.size() * strong_per_pair;
  const std::size_t planted_weak = (planted.size() + type_cases) * config.planted_queries_per_pair;
  if (planted_strong > config.n_queries_strong || planted_weak > config.n_queries_weak)
    fail("planted cases need ", planted_strong, " strong and ", planted_weak,
         " weak queries; raise n_queries_strong / n_queries_weak or lower planted_queries_per_pair");
  auto strong_items = pool('s', config.n_queries_strong - planted_strong, 10);
  auto dev_items = pool('d', config.n_queries_dev, 11);
  auto test_items = pool('t', config.n_queries_test, 12);
  auto weak_items = pool('w', config.n_queries_weak - planted_weak, 13);

  auto plant = [&](const PlantedPair& pp, char prefix, std::vector<LabeledQuery>& into, std::size_t n) {
    const int t = w.catalog.vocab.type_index(pp.entity_type);
    std::vector<std::size_t> carriers;
    for (std::size_t p = 0; p < w.products.size(); ++p) {
      const auto& a = w.products[p].attributes;
      auto it = a.find(pp.entity_type);
      if (it != a.end() && it->second == pp.canonical && a.at("product_type") == pp.context)
        carriers.push_back(p);
    }
    if (carriers.empty()) fail("no product carries planted value '", pp.canonical, "' under '", pp.context, "'");
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(mix_seed(mix_seed(config.seed, 20), into.size() * 7919 + std::size_t(prefix)));
      const std::size_t p = carriers[pick(rng, carriers.size())];
      std::vector<Mention> forced{{t, tokenize(pp.surface)}};
      const int pt = w.catalog.product_type_index();
      forced.push_back({pt, gen.value(pt, pp.context).tokens});
      into.push_back(gen.query(p, make_id(prefix, into.size()), rng, forced));
      w.intents.push_back({into.back().id, into.back().tokens, {{w.products[p].product_id, 1.0}}});
    }
  };
  for (const auto& pp : planted) {
    plant(pp, 'w', weak_items, config.planted_queries_per_pair);
    plant(pp, 's', strong_items, strong_per_pair);
  }

  // Behavior-only product type cases: queries that are just a title or theme.
  if (config.plant_cases) {
    const int brand = w.catalog.vocab.type_index("brand");
    for (const auto& [name, pts] : std::vector<std::pair<std::string, std::vector<std::string>>>{
             {"wonder woman 1984", {"movie"}}, {"unicorn", {"clothes", "toys"}}}) {
      w.planted_types.push_back({tokenize(name), pts});
      std::vector<std::string> targets;
      for (const auto& pt : pts)
        for (const auto& p : w.products)
          if (p.attributes.count("brand") && p.attributes.at("brand") == name &&
              p.attributes.at("product_type") == pt) {
            targets.push_back(p.product_id);
            break;
          }
      for (std::size_t i = 0; i < config.planted_queries_per_pair; ++i) {
        Rng rng(mix_seed(mix_seed(config.seed, 21), weak_items.size()));
        auto q = compose(w.catalog, {{brand, tokenize(name)}}, WorldConfig{.filler_rate = 0}, rng,
                         make_id('w', weak_items.size()), gen.group(rng));
        QueryIntent intent{q.id, q.tokens, {}};
        for (const auto& pid : targets) intent.targets.push_back({pid, 1.0 / double(targets.size())});
        w.intents.push_back(std::move(intent));
        weak_items.push_back(std::move(q));
      }
    }
  }

  w.strong = Corpus(w.catalog.vocab, std::move(strong_items));
  w.dev = Corpus(w.catalog.vocab, std::move(dev_items));
  w.test = Corpus(w.catalog.vocab, std::move(test_items));
  w.weak_gold = Corpus(w.catalog.vocab, std::move(weak_items));
  w.planted = std::move(planted);
  return w;
}

struct ClickConfig {
  // Share of a query's clicks that land on its intended product(s).
  double dominance = 0.7;
  long min_clicks = 10;
  long max_clicks = 40;
  std::size_t max_distractors = 3;
  std::uint64_t seed = 7;
};

// Clicks per query: `dominance` of them on the intended products, the rest
// spread over up to `max_distractors` other products of the same product
// type.
inline ClickLog generate_click_log(const std::vector<ProductRecord>& products,
                                   const std::vector<QueryIntent>& intents, const ClickConfig& cfg) {
  using namespace synth_detail;
  std::unordered_map<std::string, std::size_t> by_id;
  std::map<std::string, std::vector<std::size_t>> by_type;
  for (std::size_t i = 0; i < products.size(); ++i) {
    by_id[products[i].product_id] = i;
    auto it = products[i].attributes.find("product_type");
    by_type[it == products[i].attributes.end() ? "" : it->second].push_back(i);
  }
  ClickLog log;
  for (std::size_t qi = 0; qi < intents.size(); ++qi) {
    const auto& intent = intents[qi];
    if (intent.targets.empty()) continue;
    Rng rng(mix_seed(cfg.seed, qi));
    const long total = cfg.min_clicks + long(pick(rng, std::size_t(cfg.max_clicks - cfg.min_clicks + 1)));
    long intended = cfg.dominance >= 1.0 ? total : std::max(1L, long(std::lround(cfg.dominance * double(total))));
    std::map<std::size_t, long> clicks;
    long given = 0;
    for (std::size_t k = 0; k < intent.targets.size(); ++k) {
      const auto& [pid, share] = intent.targets[k];
      auto it = by_id.find(pid);
      if (it == by_id.end()) fail("intent for query '", intent.query_id, "' names unknown product '", pid, "'");
      long n = k + 1 == intent.targets.size() ? intended - given
                                              : std::max(1L, long(std::lround(share * double(intended))));
      n = std::max(1L, n);
      clicks[it->second] += n;
      given += n;
    }
    long rest = total - given;
    if (rest > 0 && cfg.max_distractors > 0) {
      const auto& first = products[by_id.at(intent.targets[0].first)];
      auto pt = first.attributes.find("product_type");
      const auto& pool = by_type[pt == first.attributes.end() ? "" : pt->second];
      std::vector<std::size_t> cands;
      for (std::size_t p : pool)
        if (!clicks.count(p)) cands.push_back(p);
      if (!cands.empty()) {
        const std::size_t nd = std::min<std::size_t>(1 + pick(rng, cfg.max_distractors), cands.size());
        std::shuffle(cands.begin(), cands.end(), rng);
        for (std::size_t d = 0; d < nd && rest > 0; ++d) {
          long n = d + 1 == nd ? rest : std::max(1L, rest / long(nd - d) + long(pick(rng, 3)) - 1);
          n = std::min(n, rest);
          if (n <= 0) continue;
          clicks[cands[d]] += n;
          rest -= n;
        }
      }
    }
    for (const auto& [p, n] : clicks)
      log.push_back({intent.query_id, intent.tokens, products[p].product_id, n, products[p].attributes});
  }
  return log;
}

// ---------------------------------------------------------------------------
// World summary file: config, catalog (with index status), products and the
// planted cases.

inline nlohmann::json world_to_json(const World& w) {
  nlohmann::json j;
  j["config"] = world_config_to_json(w.config);
  j["entity_types"] = w.catalog.vocab.entity_types();
  nlohmann::json cat = nlohmann::json::object();
  for (std::size_t t = 0; t < w.catalog.values.size(); ++t) {
    auto& arr = cat[w.catalog.vocab.entity_types()[t]];
    arr = nlohmann::json::array();
    for (const auto& v : w.catalog.values[t]) {
      nlohmann::json jv{{"canonical", v.canonical},
                        {"product_types", v.product_types},
                        {"index", to_string(v.index)}};
      if (v.mistyped_as >= 0) jv["mistyped_as"] = w.catalog.vocab.entity_types()[std::size_t(v.mistyped_as)];
      nlohmann::json corr = nlohmann::json::object();
      for (const auto& [k, f] : v.corrupted) corr[to_string(k)] = join(f);
      jv["corrupted"] = corr;
      arr.push_back(jv);
    }
  }
  j["catalog"] = cat;
  j["products"] = nlohmann::json::array();
  for (const auto& p : w.products) j["products"].push_back({{"product_id", p.product_id}, {"attributes", p.attributes}});
  j["planted"] = nlohmann::json::array();
  for (const auto& p : w.planted)
    j["planted"].push_back({{"entity_type", p.entity_type}, {"surface", p.surface}, {"context", p.context},
                            {"canonical", p.canonical}, {"kind", p.kind},
                            {"context_dependent", p.context_dependent}});
  j["planted_types"] = nlohmann::json::array();
  for (const auto& c : w.planted_types)
    j["planted_types"].push_back({{"query", join(c.tokens)}, {"product_types", c.product_types}});
  return j;
}

inline std::vector<PlantedPair> planted_from_json(const nlohmann::json& j) {
  std::vector<PlantedPair> out;
  for (const auto& p : j.at("planted"))
    out.push_back({p.at("entity_type").get<std::string>(), p.at("surface").get<std::string>(),
                   p.at("context").get<std::string>(), p.at("canonical").get<std::string>(),
                   p.at("kind").get<std::string>(), p.at("context_dependent").get<bool>()});
  return out;
}

inline std::vector<ProductRecord> products_from_json(const nlohmann::json& j) {
  std::vector<ProductRecord> out;
  for (const auto& p : j.at("products"))
    out.push_back({p.at("product_id").get<std::string>(),
                   p.at("attributes").get<std::map<std::string, std::string>>()});
  return out;
}

}  // namespace queaco
