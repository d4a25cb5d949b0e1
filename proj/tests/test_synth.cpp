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

#include <gtest/gtest.h>

#include <set>

#include "queaco/queaco.hpp"

namespace queaco {
namespace {

WorldConfig small_config() {
  WorldConfig c;
  c.values_per_type = 60;
  c.n_products = 800;
  c.n_queries_strong = 300;
  c.n_queries_dev = 100;
  c.n_queries_test = 100;
  c.n_queries_weak = 2000;
  return c;
}

const World& default_world() {
  static const World w = generate_world(WorldConfig{});
  return w;
}

TEST(GenerateWorld, SameSeedSameBytes) {
  const World a = generate_world(small_config());
  const World b = generate_world(small_config());
  EXPECT_EQ(corpus_to_jsonl(a.strong), corpus_to_jsonl(b.strong));
  EXPECT_EQ(corpus_to_jsonl(a.weak_gold), corpus_to_jsonl(b.weak_gold));
  EXPECT_EQ(world_to_json(a).dump(), world_to_json(b).dump());
  WorldConfig other = small_config();
  other.seed = 8;
  EXPECT_NE(corpus_to_jsonl(generate_world(other).strong), corpus_to_jsonl(a.strong));
}

TEST(GenerateWorld, SplitSizesAndProvenance) {
  const WorldConfig c = small_config();
  const World w = generate_world(c);
  EXPECT_EQ(w.strong.size(), c.n_queries_strong);
  EXPECT_EQ(w.dev.size(), c.n_queries_dev);
  EXPECT_EQ(w.test.size(), c.n_queries_test);
  EXPECT_EQ(w.weak_gold.size(), c.n_queries_weak);
  EXPECT_EQ(w.strong.count(Provenance::strong), w.strong.size());
  const Corpus pool = w.weak_pool();
  EXPECT_EQ(token_coverage(pool), 0.0);
  EXPECT_EQ(pool.count(Provenance::weak), pool.size());
  std::set<std::string> ids;
  for (const Corpus* cp : {&w.strong, &w.dev, &w.test, &w.weak_gold})
    for (const auto& q : cp->items) EXPECT_TRUE(ids.insert(q.id).second) << q.id;
  for (const auto& q : w.strong.items) {
    ASSERT_EQ(repair_bio(w.strong.vocab, q.tags), q.tags);
    ASSERT_TRUE(q.group.has_value());
  }
}

TEST(GenerateWorld, NoCorruptionMeansCanonicalMentions) {
  WorldConfig c = small_config();
  for (auto& [k, r] : c.corruption_rates) r = 0.0;
  c.plant_cases = false;
  c.random_planted_per_kind = 0;
  const World w = generate_world(c);
  std::vector<std::set<std::vector<std::string>>> canon(w.catalog.values.size());
  for (std::size_t t = 0; t < canon.size(); ++t)
    for (const auto& v : w.catalog.values[t]) canon[t].insert(v.tokens);
  for (const Corpus* cp : {&w.strong, &w.weak_gold})
    for (const auto& q : cp->items)
      for (const auto& s : decode_bio(cp->vocab, q.tags)) {
        std::vector<std::string> m(q.tokens.begin() + s.start, q.tokens.begin() + s.end + 1);
        ASSERT_TRUE(canon[std::size_t(s.type)].count(m)) << q.id << ": " << join(m);
      }
}

TEST(GenerateWorld, Errors) {
  WorldConfig c = small_config();
  c.values_per_type = 1;
  EXPECT_THROW(generate_world(c), Error);
  c = small_config();
  c.n_entity_types = 1;
  EXPECT_THROW(generate_world(c), Error);
  EXPECT_THROW(world_config_from_json(nlohmann::json{{"n_querys", 3}}), Error);
  const WorldConfig back = world_config_from_json(world_config_to_json(small_config()));
  EXPECT_EQ(world_config_to_json(back), world_config_to_json(small_config()));
}

TEST(DefaultWorld, WeakLabelsHitTargets) {
  const World& w = default_world();
  const Corpus weak = weak_label_corpus(w.weak_pool(), w.dictionary);
  const auto s = coverage_stats(weak, &w.weak_gold);
  EXPECT_NEAR(s.coverage, 0.43, 0.05);
  EXPECT_NEAR(*s.span_precision, 0.80, 0.05);
  EXPECT_NEAR(*s.span_recall, 0.48, 0.05);
  EXPECT_EQ(w.strong.size(), 2000u);
  EXPECT_EQ(w.weak_gold.size(), 20000u);
}

TEST(ClickLog, FullDominanceClicksOnlyIntended) {
  const World w = generate_world(small_config());
  ClickConfig cc;
  cc.dominance = 1.0;
  const ClickLog log = generate_click_log(w.products, w.intents, cc);
  std::map<std::string, std::set<std::string>> intended;
  for (const auto& i : w.intents)
    for (const auto& [pid, share] : i.targets) intended[i.query_id].insert(pid);
  ASSERT_FALSE(log.empty());
  for (const auto& r : log) {
    EXPECT_TRUE(intended[r.query_id].count(r.product_id)) << r.query_id;
    EXPECT_GT(r.clicks, 0);
  }
}

TEST(ClickLog, PlantedAbbreviationGetsMajorityClicks) {
  const World w = generate_world(small_config());
  const ClickLog log = generate_click_log(w.products, w.intents, ClickConfig{});
  std::map<std::string, long> by_brand;
  for (const auto& r : log) {
    if (r.query_tokens.empty() || r.query_tokens[0] != "mk") continue;
    auto pt = r.attributes.find("product_type");
    if (pt == r.attributes.end() || pt->second != "watch") continue;
    auto b = r.attributes.find("brand");
    by_brand[b == r.attributes.end() ? "" : b->second] += r.clicks;
  }
  long total = 0;
  for (const auto& [b, n] : by_brand) total += n;
  ASSERT_GT(total, 0);
  EXPECT_GT(2 * by_brand["Michael Kors"], total);
}

TEST(ClickLog, JsonlRoundTrip) {
  const World w = generate_world(small_config());
  const ClickLog log = generate_click_log(w.products, w.intents, ClickConfig{});
  const std::string path = "/tmp/queaco_test_clicks.jsonl";
  store_click_log(log, path);
  EXPECT_EQ(load_click_log(path), log);
}

TEST(Corruptions, Rules) {
  using namespace synth_detail;
  EXPECT_EQ(make_abbreviation({"michael", "kors"}), (std::vector<std::string>{"mk"}));
  Rng rng(1);
  const auto m = make_misspelling(rng, {"women"});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NE(m[0], "women");
  const long d = long(m[0].size()) - 5;
  EXPECT_LE(std::abs(d), 1);
  EXPECT_NE(make_variant({"3x5"}), (std::vector<std::string>{"3x5"}));
}

}  // namespace
}  // namespace queaco
