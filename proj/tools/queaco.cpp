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

// queaco: command-line driver for world generation, weak labeling, training,
// evaluation, attribute value normalization and report aggregation.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "queaco/queaco.hpp"

namespace fs = std::filesystem;
using namespace queaco;

namespace {

std::string output_dir(const std::string& flag, const std::string& sub) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv("QUEACO_OUT");
  return (fs::path(root && *root ? root : "queaco_out") / sub).string();
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text_file(path.string(), j.dump(2) + "\n");
}

const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) fail("missing config key '", key, "' in ", where);
  return j.at(key);
}

Corpus load_split(const fs::path& data, const std::string& name, const TagVocab& vocab) {
  const fs::path p = data / (name + ".jsonl");
  if (!fs::exists(p)) fail("missing data file ", p.string());
  return load_corpus(p.string(), vocab);
}

int cmd_gen(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out_flag,
            double dominance) {
  WorldConfig wc;
  if (!config.empty()) wc = world_config_from_json(read_json_file(config));
  if (seed) wc.seed = *seed;
  const fs::path out = output_dir(out_flag, "world");
  fs::create_directories(out);
  const World w = generate_world(wc);
  ClickConfig cc;
  cc.dominance = dominance;
  cc.seed = mix_seed(wc.seed, 0xc11c);
  const ClickLog log = generate_click_log(w.products, w.intents, cc);
  store_vocab(w.catalog.vocab, (out / "vocab.json").string());
  write_json(out / "world.json", world_to_json(w));
  write_json(out / "dictionary.json", dictionary_to_json(w.dictionary));
  store_corpus(w.strong, (out / "strong.jsonl").string());
  store_corpus(w.dev, (out / "dev.jsonl").string());
  store_corpus(w.test, (out / "test.jsonl").string());
  store_corpus(w.weak_pool(), (out / "weak_pool.jsonl").string());
  store_corpus(w.weak_gold, (out / "weak_gold.jsonl").string());
  store_click_log(log, (out / "clicks.jsonl").string());
  nlohmann::json stats{{"seed", wc.seed},
                       {"strong", w.strong.size()},
                       {"dev", w.dev.size()},
                       {"test", w.test.size()},
                       {"weak", w.weak_gold.size()},
                       {"products", w.products.size()},
                       {"click_records", log.size()},
                       {"strong_coverage", token_coverage(w.strong)}};
  write_json(out / "gen_stats.json", stats);
  std::cout << "world written to " << out.string() << "\n";
  return 0;
}

int cmd_weaklabel(const std::string& data_flag, const std::string& mode, const std::string& out_flag) {
  const fs::path data = data_flag.empty() ? output_dir("", "world") : data_flag;
  const TagVocab vocab = load_vocab((data / "vocab.json").string());
  const Corpus pool = load_split(data, "weak_pool", vocab);
  const AttributeDictionary dict = load_dictionary((data / "dictionary.json").string(), vocab);
  const WeakMatchMode m = weak_match_mode_from_string(mode);
  Corpus weak;
  if (m == WeakMatchMode::catalog) {
    weak = weak_label_corpus(pool, dict);
  } else {
    const ClickLog log = load_click_log((data / "clicks.jsonl").string());
    weak = weak_label_from_clicks(pool, log, m, &dict);
  }
  const fs::path out = out_flag.empty() ? data : fs::path(out_flag);
  fs::create_directories(out);
  store_corpus(weak, (out / "weak.jsonl").string());
  std::optional<Corpus> gold;
  if (fs::exists(data / "weak_gold.jsonl")) gold = load_split(data, "weak_gold", vocab);
  const CoverageStats s = coverage_stats(weak, gold ? &*gold : nullptr);
  nlohmann::json j{{"mode", mode}, {"coverage", s.coverage}, {"per_type_counts", s.per_type_counts}};
  if (s.span_precision) j["span_precision"] = *s.span_precision;
  if (s.span_recall) j["span_recall"] = *s.span_recall;
  write_json(out / "weak_stats.json", j);
  std::cout << "coverage " << s.coverage;
  if (s.span_precision) std::cout << " precision " << *s.span_precision << " recall " << *s.span_recall;
  std::cout << "\n";
  return 0;
}

nlohmann::json split_metrics(const TaggerParams& params, const Lexicon& lex, const Corpus& gold) {
  return metrics_to_json(span_prf(predict_corpus(params, lex, gold), gold));
}

int cmd_train(const std::string& data_flag, const std::string& method, const std::string& config,
              std::optional<std::uint64_t> seed, const std::string& out_flag) {
  const fs::path data = data_flag.empty() ? output_dir("", "world") : data_flag;
  TrainConfig cfg;
  if (!config.empty()) cfg = train_config_from_json(read_json_file(config));
  if (seed) cfg.seed = *seed;
  const TagVocab vocab = load_vocab((data / "vocab.json").string());
  const Corpus strong = load_split(data, "strong", vocab);
  const Corpus dev = load_split(data, "dev", vocab);
  Corpus weak(vocab, {});
  if (method != "supervised") {
    if (!fs::exists(data / "weak.jsonl")) fail("missing ", (data / "weak.jsonl").string(), "; run weaklabel first");
    weak = load_split(data, "weak", vocab);
  }
  const Dataset d = make_dataset(strong, weak, dev);
  const MethodResult r = train_method(method, d, cfg);
  const fs::path out = output_dir(out_flag, "runs/" + method + "/seed" + std::to_string(cfg.seed));
  fs::create_directories(out);
  store_checkpoint({r.params, d.lexicon, vocab}, (out / "model.json").string());
  write_json(out / "report.json", report_to_json(r.report));
  nlohmann::json metrics{{"method", method}, {"seed", cfg.seed}, {"config", train_config_to_json(cfg)}};
  metrics["dev"] = split_metrics(r.params, d.lexicon, dev);
  if (fs::exists(data / "test.jsonl")) metrics["test"] = split_metrics(r.params, d.lexicon, load_split(data, "test", vocab));
  write_json(out / "metrics.json", metrics);
  std::cout << method << " seed " << cfg.seed << " dev F1 " << metrics["dev"]["f1"].get<double>();
  if (metrics.contains("test")) std::cout << " test F1 " << metrics["test"]["f1"].get<double>();
  std::cout << "\n";
  return 0;
}

int cmd_eval(const std::string& data_flag, const std::string& model, const std::string& split,
             const std::string& out_flag) {
  const fs::path data = data_flag.empty() ? output_dir("", "world") : data_flag;
  if (model.empty()) fail("eval needs --model");
  const Checkpoint ck = load_checkpoint(model);
  const TagVocab vocab = ck.vocab ? *ck.vocab : load_vocab((data / "vocab.json").string());
  const Corpus gold = load_split(data, split, vocab);
  const Corpus pred = predict_corpus(ck.params, ck.lexicon, gold);
  const Metrics m = span_prf(pred, gold);
  const fs::path out = out_flag.empty() ? fs::path(model).parent_path() : fs::path(out_flag);
  fs::create_directories(out);
  write_json(out / ("eval_" + split + ".json"), metrics_to_json(m));
  store_corpus(pred, (out / ("pred_" + split + ".jsonl")).string());
  std::cout << split << " P " << m.precision << " R " << m.recall << " F1 " << m.f1 << "\n";
  return 0;
}

int cmd_avn_build(const std::string& data_flag, const std::string& model, long min_support,
                  const std::string& out_flag) {
  const fs::path data = data_flag.empty() ? output_dir("", "world") : data_flag;
  const TagVocab vocab = load_vocab((data / "vocab.json").string());
  const ClickLog log = load_click_log((data / "clicks.jsonl").string());
  // NER output on the weak pool: a trained model, or the latent gold tags.
  Corpus ner;
  if (!model.empty()) {
    const Checkpoint ck = load_checkpoint(model);
    ner = predict_corpus(ck.params, ck.lexicon, load_split(data, "weak_pool", vocab));
  } else {
    ner = load_split(data, "weak_gold", vocab);
  }
  std::map<std::string, RelevanceTable> relevance;
  for (const auto& t : vocab.entity_types()) relevance[t] = aggregate_relevance(log, t);
  const NormalizationTables tables = build_mapping_tables(ner, relevance, min_support);
  const fs::path out = output_dir(out_flag, "avn");
  fs::create_directories(out);
  write_text_file((out / "tables.tsv").string(), tables_to_tsv(tables));
  write_json(out / "tables.json", tables_to_json(tables));

  nlohmann::json summary{{"min_support", min_support}, {"ner", model.empty() ? "gold" : "model"}};
  std::size_t entries = 0;
  for (const auto& [t, tab] : tables) entries += tab.entries().size();
  summary["entries"] = entries;
  if (fs::exists(data / "world.json")) {
    const auto planted = planted_from_json(read_json_file((data / "world.json").string()));
    std::size_t ok = 0, ctx_total = 0, ctx_ok = 0;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : planted) {
      auto it = tables.find(p.entity_type);
      const Normalized n = it == tables.end() ? Normalized{p.surface, NormSource::identity}
                                              : normalize_value(p.surface, p.context, it->second);
      const bool hit = n.canonical == p.canonical;
      ok += hit;
      if (p.context_dependent) {
        ++ctx_total;
        ctx_ok += hit;
      }
      rows.push_back({{"surface", p.surface}, {"context", p.context}, {"expected", p.canonical},
                      {"got", n.canonical}, {"source", to_string(n.source)}, {"hit", hit}});
    }
    summary["planted"] = rows;
    summary["planted_recovery"] = planted.empty() ? 0.0 : double(ok) / double(planted.size());
    summary["context_dependent_recovery"] = ctx_total == 0 ? 0.0 : double(ctx_ok) / double(ctx_total);
  }
  write_json(out / "avn_summary.json", summary);
  std::cout << "tables written to " << out.string() << " (" << entries << " entries)\n";
  return 0;
}

int cmd_avn_normalize(const std::string& tables_path, const std::string& type, const std::string& surface,
                      const std::string& context, const std::string& input, const std::string& out_flag) {
  const std::string path = tables_path.empty() ? (fs::path(output_dir("", "avn")) / "tables.json").string()
                                               : tables_path;
  const NormalizationTables tables = tables_from_json(read_json_file(path));
  auto lookup = [&](const std::string& t, const std::string& m, const std::string& p) {
    auto it = tables.find(t);
    if (it == tables.end()) return Normalized{join(tokenize(m)), NormSource::identity};
    return normalize_value(m, p, it->second);
  };
  if (!input.empty()) {
    // Each line: entity_type <TAB> surface <TAB> context
    std::ifstream in(input);
    if (!in) fail("cannot open ", input);
    std::string out_text = "entity_type\tsurface\tcontext\tcanonical\tsource\n";
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, '\t')) f.push_back(cell);
      if (f.size() < 2) fail(input, ":", lineno, ": expected entity_type<TAB>surface[<TAB>context]");
      const std::string ctx = f.size() > 2 ? f[2] : "";
      const Normalized n = lookup(f[0], f[1], ctx);
      out_text += f[0] + "\t" + f[1] + "\t" + ctx + "\t" + n.canonical + "\t" + to_string(n.source) + "\n";
    }
    if (out_flag.empty()) {
      std::cout << out_text;
    } else {
      fs::create_directories(fs::path(out_flag));
      write_text_file((fs::path(out_flag) / "normalized.tsv").string(), out_text);
    }
    return 0;
  }
  if (surface.empty()) fail("avn-normalize needs --surface or --input");
  const Normalized n = lookup(type, surface, context);
  std::cout << n.canonical << "\t" << to_string(n.source) << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& config, const std::string& split,
               const std::string& out_flag) {
  std::vector<fs::path> files;
  if (!config.empty()) {
    const auto spec = read_json_file(config);
    const std::string root = require(spec, "runs_root", config).get<std::string>();
    const auto methods = require(spec, "methods", config).get<std::vector<std::string>>();
    const auto seeds = require(spec, "seeds", config).get<std::vector<std::uint64_t>>();
    if (seeds.empty()) fail("config key 'seeds' in ", config, " must be non-empty");
    for (const auto& m : methods)
      for (auto s : seeds) files.push_back(fs::path(root) / m / ("seed" + std::to_string(s)) / "metrics.json");
  }
  for (const auto& r : runs) {
    const fs::path p(r);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.path().filename() == "metrics.json") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  if (files.empty()) fail("report: no metrics files (use --runs or --config)");
  std::map<std::string, std::vector<std::array<double, 3>>> by_method;
  std::vector<std::string> order;
  for (const auto& f : files) {
    if (!fs::exists(f)) fail("missing metrics file ", f.string());
    const auto j = read_json_file(f.string());
    const std::string method = require(j, "method", f.string()).get<std::string>();
    const auto& m = require(j, split, f.string());
    if (!by_method.count(method)) order.push_back(method);
    by_method[method].push_back({m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>()});
  }
  std::vector<ReportRow> rows;
  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& method : order) {
    const auto& v = by_method[method];
    std::array<double, 3> mean{0, 0, 0};
    for (const auto& x : v)
      for (int k = 0; k < 3; ++k) mean[k] += x[k] / double(v.size());
    double var = 0;
    for (const auto& x : v) var += (x[2] - mean[2]) * (x[2] - mean[2]);
    const double sd = v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0;
    rows.push_back({method, mean[0], mean[1], mean[2], sd});
    jrows.push_back({{"method", method}, {"runs", v.size()}, {"precision", mean[0]}, {"recall", mean[1]},
                     {"f1", mean[2]}, {"f1_std", sd}});
  }
  const std::string table = format_prf_table(rows);
  const fs::path out = output_dir(out_flag, "report");
  fs::create_directories(out);
  write_text_file((out / "report.txt").string(), table);
  write_json(out / "report.json", {{"split", split}, {"rows", jrows}});
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"queaco: query attribute value extraction laboratory"};
  app.require_subcommand(1);
  std::string config, out, data, method = "queaco", mode = "catalog", model, split = "test", tables, type = "brand",
              surface, context, input;
  std::optional<std::uint64_t> seed;
  double dominance = 0.7;
  long min_support = 5;
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("gen", "generate a synthetic world, corpora and click log");
  gen->add_option("--config", config, "world config JSON");
  gen->add_option("--seed", seed, "world seed (overrides the config)");
  gen->add_option("--out", out, "output directory");
  gen->add_option("--dominance", dominance, "click share of the intended product")->check(CLI::Range(0.0, 1.0));

  auto* wl = app.add_subcommand("weaklabel", "weak-label the weak pool by dictionary matching");
  wl->add_option("--data", data, "world directory");
  wl->add_option("--mode", mode, "catalog | top_clicked | all_clicked");
  wl->add_option("--out", out, "output directory (default: the world directory)");

  auto* tr = app.add_subcommand("train", "train a method; writes model, report and metrics");
  tr->add_option("--data", data, "world directory (with weak.jsonl)");
  tr->add_option("--method", method, "method name")->check(CLI::IsMember(method_names()));
  tr->add_option("--config", config, "train config JSON");
  tr->add_option("--seed", seed, "training seed (overrides the config)");
  tr->add_option("--out", out, "output directory");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("--data", data, "world directory");
  ev->add_option("--model", model, "checkpoint JSON")->required();
  ev->add_option("--split", split, "split name (dev, test, ...)");
  ev->add_option("--out", out, "output directory");

  auto* ab = app.add_subcommand("avn-build", "build normalization tables from clicks and NER output");
  ab->add_option("--data", data, "world directory");
  ab->add_option("--model", model, "NER checkpoint (default: latent gold spans)");
  ab->add_option("--min-support", min_support, "minimum queries per entry");
  ab->add_option("--out", out, "output directory");

  auto* an = app.add_subcommand("avn-normalize", "normalize a surface form or a TSV of them");
  an->add_option("--tables", tables, "tables.json from avn-build");
  an->add_option("--type", type, "entity type");
  an->add_option("--surface", surface, "surface form");
  an->add_option("--context", context, "product type context");
  an->add_option("--input", input, "TSV lines: entity_type, surface, context");
  an->add_option("--out", out, "output directory for --input");

  auto* rp = app.add_subcommand("report", "aggregate metrics across seeds into a table");
  rp->add_option("--runs", runs, "metrics files or directories");
  rp->add_option("--config", config, "experiment spec JSON (runs_root, methods, seeds)");
  rp->add_option("--split", split, "metrics split to aggregate");
  rp->add_option("--out", out, "output directory");

  const std::set<std::string> commands{"gen", "weaklabel", "train", "eval", "avn-build", "avn-normalize", "report"};
  if (argc > 1 && argv[1][0] != '-' && !commands.count(argv[1])) {
    std::cerr << "unknown command '" << argv[1] << "'\n\n" << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*gen) return cmd_gen(config, seed, out, dominance);
    if (*wl) return cmd_weaklabel(data, mode, out);
    if (*tr) return cmd_train(data, method, config, seed, out);
    if (*ev) return cmd_eval(data, model, split, out);
    if (*ab) return cmd_avn_build(data, model, min_support, out);
    if (*an) return cmd_avn_normalize(tables, type, surface, context, input, out);
    if (*rp) return cmd_report(runs, config, split, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
