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

// Training procedures: supervised training and finetuning, the weakly and
// semi-supervised baselines, and the meta teacher-student pretraining loop.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "queaco/corpus.hpp"
#include "queaco/eval.hpp"
#include "queaco/tagger.hpp"

namespace queaco {

struct TrainConfig {
  double lr = 2e-3;
  double teacher_lr = 3e-3;
  std::size_t epochs = 3;            // passes over the weak pool
  std::size_t finetune_epochs = 30;  // passes over the strong set
  std::size_t batch_strong = 32;
  std::size_t batch_weak = 32;
  double sigma = 0.3;
  double tau = 0.5;
  double epsilon = 0.9;
  double wsl_weight = 0.5;
  std::uint64_t seed = 1;
  std::size_t early_stop_patience = 4;
  // Evaluate on dev every this many pretraining steps (0: once per epoch).
  std::size_t eval_every = 0;
  TaggerDims dims;
  std::optional<TaggerDims> teacher_dims;
  // Ablation switches.
  bool student_feedback = true;
  bool refine = true;
  bool finetune = true;
  // Replaces the measured feedback by a constant.
  std::optional<double> lambda_override;

  void validate() const {
    if (!(sigma >= 0)) fail("train config 'sigma' must be >= 0");
    if (!(tau > 0)) fail("train config 'tau' must be > 0");
    if (!(epsilon >= 0 && epsilon <= 1)) fail("train config 'epsilon' must be in [0,1]");
    if (!(wsl_weight > 0 && wsl_weight <= 1)) fail("train config 'wsl_weight' must be in (0,1]");
    if (!(lr >= 0) || !(teacher_lr >= 0)) fail("learning rates must be >= 0");
    if (batch_strong < 1 || batch_weak < 1) fail("batch sizes must be >= 1");
    if (early_stop_patience < 1) fail("train config 'early_stop_patience' must be >= 1");
  }
};

inline nlohmann::json dims_to_json(const TaggerDims& d) {
  return {{"embed", d.embed}, {"hidden", d.hidden}, {"window", d.window}};
}

inline TaggerDims dims_from_json(const nlohmann::json& j) {
  TaggerDims d;
  for (const auto& [k, v] : j.items()) {
    if (k == "embed") d.embed = v.get<std::size_t>();
    else if (k == "hidden") d.hidden = v.get<std::size_t>();
    else if (k == "window") d.window = v.get<std::size_t>();
    else fail("unknown dims key '", k, "'");
  }
  return d;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j{{"lr", c.lr},
                   {"teacher_lr", c.teacher_lr},
                   {"epochs", c.epochs},
                   {"finetune_epochs", c.finetune_epochs},
                   {"batch_strong", c.batch_strong},
                   {"batch_weak", c.batch_weak},
                   {"sigma", c.sigma},
                   {"tau", c.tau},
                   {"epsilon", c.epsilon},
                   {"wsl_weight", c.wsl_weight},
                   {"seed", c.seed},
                   {"early_stop_patience", c.early_stop_patience},
                   {"eval_every", c.eval_every},
                   {"dims", dims_to_json(c.dims)},
                   {"student_feedback", c.student_feedback},
                   {"refine", c.refine},
                   {"finetune", c.finetune}};
  j["teacher_dims"] = c.teacher_dims ? dims_to_json(*c.teacher_dims) : nlohmann::json(nullptr);
  j["lambda_override"] = c.lambda_override ? nlohmann::json(*c.lambda_override) : nlohmann::json(nullptr);
  return j;
}

// Keys absent from `j` keep the values of `base`; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  const auto known = train_config_to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) fail("unknown train config key '", key, "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("lr", c.lr);
  get("teacher_lr", c.teacher_lr);
  get("epochs", c.epochs);
  get("finetune_epochs", c.finetune_epochs);
  get("batch_strong", c.batch_strong);
  get("batch_weak", c.batch_weak);
  get("sigma", c.sigma);
  get("tau", c.tau);
  get("epsilon", c.epsilon);
  get("wsl_weight", c.wsl_weight);
  get("seed", c.seed);
  get("early_stop_patience", c.early_stop_patience);
  get("eval_every", c.eval_every);
  get("student_feedback", c.student_feedback);
  get("refine", c.refine);
  get("finetune", c.finetune);
  if (j.contains("dims")) c.dims = dims_from_json(j.at("dims"));
  if (j.contains("teacher_dims")) {
    if (j.at("teacher_dims").is_null()) c.teacher_dims.reset();
    else c.teacher_dims = dims_from_json(j.at("teacher_dims"));
  }
  if (j.contains("lambda_override")) {
    if (j.at("lambda_override").is_null()) c.lambda_override.reset();
    else c.lambda_override = j.at("lambda_override").get<double>();
  }
  c.validate();
  return c;
}

struct TrainReport {
  std::string method;
  std::uint64_t seed = 0;
  // Per pretraining step.
  std::vector<double> l_sup, l_reg, l_meta, l_s, lambda_meta;
  // Per step of plain supervised-style stages.
  std::vector<double> train_loss;
  // Dev span-F1 at each evaluation, per stage.
  std::vector<double> pretrain_dev_f1, finetune_dev_f1;
  std::string best_checkpoint;
  double best_dev_f1 = 0;
  std::size_t steps = 0;
  bool diverged = false;
  std::string error;
  double wall_seconds = 0;
};

inline nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json j{{"method", r.method},
                   {"seed", r.seed},
                   {"l_sup", r.l_sup},
                   {"l_reg", r.l_reg},
                   {"l_meta", r.l_meta},
                   {"l_s", r.l_s},
                   {"lambda_meta", r.lambda_meta},
                   {"train_loss", r.train_loss},
                   {"pretrain_dev_f1", r.pretrain_dev_f1},
                   {"finetune_dev_f1", r.finetune_dev_f1},
                   {"best_checkpoint", r.best_checkpoint},
                   {"best_dev_f1", r.best_dev_f1},
                   {"steps", r.steps},
                   {"diverged", r.diverged},
                   {"error", r.error}};
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["metadata"] = {{"wall_seconds", r.wall_seconds}, {"timestamp", stamp}};
  return j;
}

// y_r = y_w where the weak tag is an entity tag, else the pseudo tag.
inline std::vector<TagId> refine_labels(std::span<const TagId> weak, std::span<const TagId> pseudo) {
  if (weak.size() != pseudo.size())
    fail("refine_labels: weak has ", weak.size(), " tags but pseudo has ", pseudo.size());
  std::vector<TagId> out(weak.size());
  for (std::size_t i = 0; i < weak.size(); ++i) out[i] = weak[i] != kOutsideTag ? weak[i] : pseudo[i];
  return out;
}

// Change of the student's strong-data loss across one student update.
inline double compute_lambda_meta(double loss_before, double loss_after) {
  if (!std::isfinite(loss_before) || !std::isfinite(loss_after))
    fail("compute_lambda_meta: non-finite loss (before ", loss_before, ", after ", loss_after, ")");
  return loss_after - loss_before;
}

struct Encoded {
  std::vector<std::string> query_ids;
  std::vector<std::vector<TokenId>> ids;
  HardLabels tags;

  std::size_t size() const { return ids.size(); }
};

inline Encoded encode(const Corpus& c, const Lexicon& lex) {
  Encoded e;
  for (const auto& q : c.items) {
    e.query_ids.push_back(q.id);
    e.ids.push_back(lex.encode(q.tokens));
    e.tags.push_back(q.tags);
  }
  return e;
}

// Everything a trainer needs: a shared lexicon over the training corpora and
// the encoded strong, weak and dev sets.
struct Dataset {
  TagVocab vocab;
  Lexicon lexicon;
  Encoded strong, weak, dev;
  Corpus dev_corpus;
};

inline Dataset make_dataset(const Corpus& strong, const Corpus& weak, const Corpus& dev) {
  if (!weak.empty() && !(weak.vocab == strong.vocab)) fail("strong and weak corpora use different vocabularies");
  if (!dev.empty() && !(dev.vocab == strong.vocab)) fail("strong and dev corpora use different vocabularies");
  Dataset d;
  d.vocab = strong.vocab;
  d.lexicon = joint_lexicon({&strong, &weak});
  d.strong = encode(strong, d.lexicon);
  d.weak = encode(weak, d.lexicon);
  d.dev = encode(dev, d.lexicon);
  d.dev_corpus = dev;
  return d;
}

inline std::vector<std::vector<TagId>> predict_tags(const TaggerParams& params,
                                                    const std::vector<std::vector<TokenId>>& ids) {
  std::vector<std::vector<TagId>> out;
  out.reserve(ids.size());
  for (const auto& x : ids) out.push_back(predict(params, x).tags);
  return out;
}

// Tags every query of `corpus` with the model; provenance becomes predicted.
inline Corpus predict_corpus(const TaggerParams& params, const Lexicon& lex, const Corpus& corpus) {
  Corpus out = corpus;
  for (auto& q : out.items) {
    q.tags = repair_bio(out.vocab, predict(params, lex.encode(q.tokens)).tags);
    q.provenance = Provenance::predicted;
  }
  return out;
}

inline double dev_f1(const TaggerParams& params, const Dataset& d) {
  if (d.dev.size() == 0) return 0.0;
  SpanCounts c;
  for (std::size_t i = 0; i < d.dev.size(); ++i) {
    const auto pred = decode_bio(d.vocab, predict(params, d.dev.ids[i]).tags);
    c += match_spans(pred, decode_bio(d.vocab, d.dev.tags[i]));
  }
  return c.f1();
}

namespace train_detail {

using Rng = std::mt19937_64;

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Endless shuffled stream of batches over n items.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {}
  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < std::min(batch_, n_)) {
      if (pos_ == order_.size()) {
        order_ = shuffled(n_, mix_seed(seed_, pass_++));
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::uint64_t pass_ = 0;
};

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::uint64_t seed) {
  const auto order = shuffled(n, seed);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch)
    out.emplace_back(order.begin() + long(i), order.begin() + long(std::min(n, i + batch)));
  return out;
}

template <class T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, TaggerParams initial, double initial_f1, std::string label)
      : patience_(patience), best_(std::move(initial)), best_f1_(initial_f1), label_(std::move(label)) {}

  // Returns false once patience is exhausted.
  bool observe(double f1, const TaggerParams& params, const std::string& label) {
    if (f1 > best_f1_) {
      best_f1_ = f1;
      best_ = params;
      label_ = label;
      bad_ = 0;
      return true;
    }
    return ++bad_ < patience_;
  }
  const TaggerParams& best() const { return best_; }
  double best_f1() const { return best_f1_; }
  const std::string& label() const { return label_; }

 private:
  std::size_t patience_;
  TaggerParams best_;
  double best_f1_;
  std::string label_;
  std::size_t bad_ = 0;
};

inline void check_finite(double v, const char* what, TrainReport& report) {
  if (!std::isfinite(v)) {
    report.diverged = true;
    report.error = std::string("non-finite ") + what + " at step " + std::to_string(report.steps);
  }
}

}  // namespace train_detail

// One labeled training item: token ids plus either hard tags or a soft
// distribution, with optional item and token weights.
struct TrainItem {
  const std::vector<TokenId>* ids = nullptr;
  std::vector<TagId> hard;
  TagDistribution soft;
  double weight = 1.0;
  std::vector<double> token_weights;  // empty: all 1
};

// One pass over `items` in seeded random order. On a non-finite loss the
// report is flagged and the parameters before that step are returned.
inline TaggerParams train_epoch(TaggerParams params, const std::vector<TrainItem>& items, LossKind kind,
                                double lr, std::size_t batch, double sigma, std::uint64_t seed, AdamState& adam,
                                TrainReport& report) {
  using namespace train_detail;
  const bool soft = kind == LossKind::ce_soft_tempered;
  ParameterSet grad = zeros_like(params.blocks);
  std::vector<std::vector<TokenId>> xb;
  std::vector<double> wb;
  std::vector<std::vector<double>> tb;
  for (const auto& idx : epoch_batches(items.size(), batch, seed)) {
    xb.clear();
    wb.clear();
    tb.clear();
    HardLabels yb;
    SoftLabels sb;
    bool any_token_weights = false;
    for (std::size_t i : idx) any_token_weights |= !items[i].token_weights.empty();
    for (std::size_t i : idx) {
      xb.push_back(*items[i].ids);
      if (soft) sb.push_back(items[i].soft);
      else yb.push_back(items[i].hard);
      wb.push_back(items[i].weight);
      if (any_token_weights)
        tb.push_back(items[i].token_weights.empty() ? std::vector<double>(xb.back().size(), 1.0)
                                                    : items[i].token_weights);
    }
    LossOptions opts;
    opts.item_weights = wb;
    opts.token_weights = tb;
    opts.noise_sigma = sigma;
    opts.noise_seed = mix_seed(seed, 0x5eed0000ULL + report.steps);
    set_zero(grad);
    const Labels labels = soft ? Labels(std::move(sb)) : Labels(std::move(yb));
    const double l = loss_into(params, xb, labels, kind, opts, grad);
    check_finite(l, "training loss", report);
    if (report.diverged) return params;
    report.train_loss.push_back(l);
    ++report.steps;
    params = step(params, grad, adam, lr);
  }
  return params;
}

// Supervised-style training on a fixed item list with early stopping on dev
// span-F1; returns the best model seen (the input included).
inline TaggerParams fit_items(const TaggerParams& init, const std::vector<TrainItem>& items, LossKind kind,
                              const Dataset& d, double lr, std::size_t epochs, std::size_t batch,
                              std::size_t patience, double sigma, std::uint64_t seed, TrainReport& report,
                              std::vector<double>& dev_trace, const std::string& stage) {
  using namespace train_detail;
  if (epochs == 0 || items.empty()) return init;
  EarlyStopper stopper(patience, init, dev_f1(init, d), stage + ":init");
  TaggerParams params = init;
  AdamState adam;
  for (std::size_t e = 0; e < epochs; ++e) {
    params = train_epoch(std::move(params), items, kind, lr, batch, sigma, mix_seed(seed, e), adam, report);
    if (report.diverged) break;
    const double f1 = dev_f1(params, d);
    dev_trace.push_back(f1);
    if (!stopper.observe(f1, params, stage + ":epoch" + std::to_string(e + 1))) break;
  }
  report.best_checkpoint = stopper.label();
  report.best_dev_f1 = stopper.best_f1();
  return stopper.best();
}

inline std::vector<TrainItem> hard_items(const Encoded& e, double weight = 1.0) {
  std::vector<TrainItem> items(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    items[i].ids = &e.ids[i];
    items[i].hard = e.tags[i];
    items[i].weight = weight;
  }
  return items;
}

// Supervised CE training on the strong set, early-stopped on dev. With zero
// finetune epochs the input is returned unchanged.
inline TaggerParams finetune(const TaggerParams& student, const Dataset& d, const TrainConfig& cfg,
                             TrainReport& report) {
  if (d.strong.size() == 0) fail("finetune: empty strong corpus");
  return fit_items(student, hard_items(d.strong), LossKind::ce_hard, d, cfg.lr, cfg.finetune_epochs,
                   cfg.batch_strong, cfg.early_stop_patience, 0.0, mix_seed(cfg.seed, 101), report,
                   report.finetune_dev_f1, "finetune");
}

inline TaggerParams initial_params(const Dataset& d, const TrainConfig& cfg, const TaggerDims& dims,
                                   std::uint64_t stream = 0) {
  return init_params(d.lexicon.size(), d.vocab.num_tags(), dims, mix_seed(cfg.seed, stream));
}

inline TaggerParams train_supervised(const Dataset& d, const TrainConfig& cfg, TrainReport& report,
                                     std::optional<TaggerDims> dims = std::nullopt) {
  return finetune(initial_params(d, cfg, dims.value_or(cfg.dims)), d, cfg, report);
}

// Frozen inputs of one teacher update.
struct TeacherBatch {
  std::vector<std::vector<TokenId>> strong_x;
  HardLabels strong_y;
  std::vector<std::vector<TokenId>> weak_x;
  SoftLabels reg_target;  // clean teacher distribution on the weak batch
  HardLabels refined;     // Y^r
  double lambda = 0;
  std::uint64_t noise_seed = 0;
};

struct TeacherLosses {
  double sup = 0, reg = 0, meta = 0;
  double total() const { return sup + reg; }
};

// L_sup + L_reg + lambda * CE(Y^r, teacher), gradients added into `grad`.
// The regularizer target, refined labels and lambda are constants.
inline TeacherLosses teacher_objective_into(const TaggerParams& teacher, const TeacherBatch& b,
                                            const TrainConfig& cfg, ParameterSet& grad) {
  TeacherLosses l;
  l.sup = loss_into(teacher, b.strong_x, b.strong_y, LossKind::ce_hard, {}, grad);
  LossOptions reg;
  reg.temperature = cfg.tau;
  reg.noise_sigma = cfg.sigma;
  reg.noise_seed = b.noise_seed;
  l.reg = loss_into(teacher, b.weak_x, b.reg_target, LossKind::ce_soft_tempered, reg, grad);
  l.meta = loss_into(teacher, b.weak_x, b.refined, LossKind::ce_hard, {}, grad, b.lambda);
  return l;
}

inline double teacher_objective_value(const TaggerParams& teacher, const TeacherBatch& b,
                                      const TrainConfig& cfg) {
  ParameterSet none;
  const auto l = teacher_objective_into(teacher, b, cfg, none);
  return l.sup + l.reg + b.lambda * l.meta;
}

struct PretrainResult {
  TaggerParams teacher;
  TaggerParams student;
  TrainReport report;
};

// Meta teacher-student pretraining. `d.weak.tags` holds the weak labels.
// Per iteration: the teacher pseudo-labels a weak batch, refinement keeps the
// weak entity tags, the student takes one step on the refined labels, the
// change of its strong-batch loss becomes the feedback lambda, and the
// teacher takes one step on L_sup + L_reg + lambda * CE(Y^r). Early stopping
// tracks the student's dev F1.
inline PretrainResult queaco_pretrain(const Dataset& d, const TrainConfig& cfg, const TaggerParams& teacher_init,
                                      const TaggerParams& student_init) {
  using namespace train_detail;
  cfg.validate();
  if (d.strong.size() == 0) fail("queaco_pretrain: empty strong corpus");
  if (d.weak.size() == 0) fail("queaco_pretrain: empty weak corpus");
  const auto t0 = std::chrono::steady_clock::now();
  PretrainResult out;
  TrainReport& rep = out.report;
  rep.method = "queaco";
  rep.seed = cfg.seed;

  TaggerParams teacher = teacher_init, student = student_init;
  AdamState adam_t, adam_s;
  ParameterSet grad_t = zeros_like(teacher.blocks), grad_s = zeros_like(student.blocks);
  BatchStream strong_stream(d.strong.size(), cfg.batch_strong, mix_seed(cfg.seed, 201));
  EarlyStopper stopper(cfg.early_stop_patience, student, dev_f1(student, d), "pretrain:init");
  TaggerParams best_teacher = teacher;
  bool stop = false;
  std::size_t since_eval = 0;
  TeacherBatch tb;
  auto evaluate = [&](const std::string& label) {
    const double f1 = dev_f1(student, d);
    rep.pretrain_dev_f1.push_back(f1);
    const double before = stopper.best_f1();
    if (!stopper.observe(f1, student, label)) stop = true;
    if (stopper.best_f1() > before) best_teacher = teacher;
  };

  for (std::size_t e = 0; e < cfg.epochs && !stop; ++e) {
    const auto batches = epoch_batches(d.weak.size(), cfg.batch_weak, mix_seed(cfg.seed, 300 + e));
    for (std::size_t bi = 0; bi < batches.size() && !stop; ++bi) {
      const auto& wb = batches[bi];
      tb.weak_x = gather(d.weak.ids, wb);
      const auto weak_y = gather(d.weak.tags, wb);
      const auto sb = strong_stream.next();
      tb.strong_x = gather(d.strong.ids, sb);
      tb.strong_y = gather(d.strong.tags, sb);

      // (1) pseudo labels and regularizer target from the clean teacher pass.
      tb.reg_target.clear();
      tb.refined.clear();
      for (std::size_t i = 0; i < wb.size(); ++i) {
        tb.reg_target.push_back(forward(teacher, tb.weak_x[i]));
        const auto pseudo = predict_from(tb.reg_target.back(), std::nullopt).tags;
        // (2) refinement.
        tb.refined.push_back(cfg.refine ? refine_labels(weak_y[i], pseudo) : pseudo);
      }

      // (3)-(5) student step and feedback on the same strong batch.
      double before = 0, after = 0;
      if (cfg.student_feedback) before = loss_value(student, tb.strong_x, tb.strong_y, LossKind::ce_hard);
      set_zero(grad_s);
      const double ls = loss_into(student, tb.weak_x, tb.refined, LossKind::ce_hard, {}, grad_s);
      check_finite(ls, "student loss", rep);
      if (rep.diverged) break;
      student = step(student, grad_s, adam_s, cfg.lr);
      if (cfg.student_feedback) after = loss_value(student, tb.strong_x, tb.strong_y, LossKind::ce_hard);

      // (6) feedback.
      double lambda = 0;
      if (cfg.lambda_override) lambda = *cfg.lambda_override;
      else if (cfg.student_feedback) lambda = compute_lambda_meta(before, after);
      tb.lambda = lambda;
      tb.noise_seed = mix_seed(cfg.seed, 0x40000000ULL + rep.steps);

      // (7) teacher step, all terms at the pre-step teacher.
      set_zero(grad_t);
      const auto tl = teacher_objective_into(teacher, tb, cfg, grad_t);
      check_finite(tl.sup + tl.reg + lambda * tl.meta, "teacher loss", rep);
      if (rep.diverged) break;
      teacher = step(teacher, grad_t, adam_t, cfg.teacher_lr);

      rep.l_sup.push_back(tl.sup);
      rep.l_reg.push_back(tl.reg);
      rep.l_meta.push_back(lambda * tl.meta);
      rep.l_s.push_back(ls);
      rep.lambda_meta.push_back(lambda);
      ++rep.steps;
      if (cfg.eval_every > 0 && ++since_eval == cfg.eval_every) {
        since_eval = 0;
        evaluate("pretrain:step" + std::to_string(rep.steps));
      }
    }
    if (rep.diverged) break;
    if (cfg.eval_every == 0 && !stop) evaluate("pretrain:epoch" + std::to_string(e + 1));
  }
  out.teacher = best_teacher;
  out.student = stopper.best();
  rep.best_checkpoint = stopper.label();
  rep.best_dev_f1 = stopper.best_f1();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline const std::vector<std::string>& baseline_kinds() {
  static const std::vector<std::string> k = {"supervised", "self_training",  "noisy_student", "wsl",
                                             "wsl_weighted", "wsl_robust",   "bond_hard",     "bond_soft",
                                             "bond_soft_high", "bond_noisy_student"};
  return k;
}

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> m = [] {
    auto v = baseline_kinds();
    for (const char* q : {"queaco", "queaco_no_feedback", "queaco_no_noise", "queaco_no_refine",
                          "queaco_no_finetune"})
      v.push_back(q);
    return v;
  }();
  return m;
}

// Intermediate models shared between methods trained on the same data and
// config (the supervised model, the stage-one WSL model).
struct ModelCache {
  std::map<std::string, TaggerParams> models;
};

struct MethodResult {
  TaggerParams params;
  TrainReport report;
};

namespace train_detail {

inline TaggerParams cached(ModelCache* cache, const std::string& key, const std::function<TaggerParams()>& make) {
  if (cache) {
    auto it = cache->models.find(key);
    if (it != cache->models.end()) return it->second;
  }
  TaggerParams p = make();
  if (cache) cache->models[key] = p;
  return p;
}

inline std::string dims_key(const TaggerDims& dims) {
  return std::to_string(dims.embed) + "x" + std::to_string(dims.hidden) + "w" + std::to_string(dims.window);
}

inline TaggerParams wsl_stage(const Dataset& d, const TrainConfig& cfg, const std::string& kind,
                              TrainReport& report) {
  const double w = kind == "wsl_weighted" ? cfg.wsl_weight : 1.0;
  auto items = hard_items(d.strong);
  auto weak = hard_items(d.weak, w);
  items.insert(items.end(), weak.begin(), weak.end());
  const LossKind loss = kind == "wsl_robust" ? LossKind::mse : LossKind::ce_hard;
  return fit_items(initial_params(d, cfg, cfg.dims), items, loss, d, cfg.lr, cfg.epochs, cfg.batch_weak,
                   cfg.early_stop_patience, 0.0, mix_seed(cfg.seed, 401), report, report.pretrain_dev_f1, "wsl");
}

// Teacher-student rounds on the weak pool with its tags ignored: each round
// the current teacher labels the pool, the student trains on those labels
// (plus the strong set when `with_strong`), and the student becomes the next
// teacher.
inline TaggerParams self_train(const Dataset& d, const TrainConfig& cfg, TaggerParams teacher,
                               const std::string& mode, double sigma, bool with_strong, TrainReport& report) {
  using namespace train_detail;
  EarlyStopper stopper(cfg.early_stop_patience, teacher, dev_f1(teacher, d), "selftrain:init");
  AdamState adam;
  for (std::size_t round = 0; round < cfg.epochs; ++round) {
    std::vector<TrainItem> items;
    if (with_strong) items = hard_items(d.strong);
    const std::size_t first = items.size();
    items.resize(first + d.weak.size());
    std::vector<TagDistribution> dists(d.weak.size());
    for (std::size_t i = 0; i < d.weak.size(); ++i) dists[i] = forward(teacher, d.weak.ids[i]);
    const bool soft = mode == "soft" || mode == "soft_high";
    if (soft) {
      // Sharpened soft labels s_c ∝ p_c^2 / f_c, f_c summed over each batch.
      const auto batches = epoch_batches(d.weak.size(), cfg.batch_weak, mix_seed(cfg.seed, 500 + round));
      const std::size_t k = d.vocab.num_tags();
      for (const auto& b : batches) {
        std::vector<double> f(k, 0.0);
        for (std::size_t i : b)
          for (std::size_t j = 0; j < dists[i].length; ++j)
            for (std::size_t c = 0; c < k; ++c) f[c] += dists[i].row(j)[c];
        for (std::size_t i : b) {
          TagDistribution s = dists[i];
          for (std::size_t j = 0; j < s.length; ++j) {
            double* r = s.probs.data() + j * k;
            double z = 0;
            for (std::size_t c = 0; c < k; ++c) {
              r[c] = f[c] > 0 ? r[c] * r[c] / f[c] : 0.0;
              z += r[c];
            }
            for (std::size_t c = 0; c < k; ++c) r[c] = z > 0 ? r[c] / z : 1.0 / double(k);
          }
          auto& item = items[first + i];
          item.ids = &d.weak.ids[i];
          item.soft = std::move(s);
          if (mode == "soft_high") {
            const auto pr = predict_from(dists[i], cfg.epsilon);
            item.token_weights.resize(pr.tags.size());
            for (std::size_t j = 0; j < pr.tags.size(); ++j) item.token_weights[j] = pr.low_confidence[j] ? 0.0 : 1.0;
          }
        }
      }
      if (with_strong) {
        for (std::size_t i = 0; i < first; ++i) {
          // Strong items as one-hot distributions.
          TagDistribution s;
          s.length = items[i].hard.size();
          s.num_tags = k;
          s.probs.assign(s.length * k, 0.0);
          for (std::size_t j = 0; j < s.length; ++j) s.probs[j * k + std::size_t(items[i].hard[j])] = 1.0;
          items[i].soft = std::move(s);
        }
      }
    } else {
      for (std::size_t i = 0; i < d.weak.size(); ++i) {
        items[first + i].ids = &d.weak.ids[i];
        items[first + i].hard = predict_from(dists[i], std::nullopt).tags;
      }
    }
    teacher = train_epoch(teacher, items, soft ? LossKind::ce_soft_tempered : LossKind::ce_hard, cfg.lr,
                          cfg.batch_weak, sigma, mix_seed(cfg.seed, 600 + round), adam, report);
    if (report.diverged) break;
    const double f1 = dev_f1(teacher, d);
    report.pretrain_dev_f1.push_back(f1);
    if (!stopper.observe(f1, teacher, "selftrain:round" + std::to_string(round + 1))) break;
  }
  return stopper.best();
}

}  // namespace train_detail

// Trains one baseline. `d.weak.tags` holds weak labels; the semi-supervised
// kinds ignore them.
inline MethodResult train_baseline(const std::string& kind, const Dataset& d, const TrainConfig& cfg,
                                   ModelCache* cache = nullptr) {
  using namespace train_detail;
  cfg.validate();
  if (std::find(baseline_kinds().begin(), baseline_kinds().end(), kind) == baseline_kinds().end())
    fail("unknown baseline kind '", kind, "'");
  if (d.strong.size() == 0) fail("train_baseline: empty strong corpus");
  if (kind != "supervised" && d.weak.size() == 0) fail("baseline '", kind, "' needs a weak corpus");
  const auto t0 = std::chrono::steady_clock::now();
  MethodResult r;
  r.report.method = kind;
  r.report.seed = cfg.seed;
  const std::string base_key = std::to_string(cfg.seed) + "/" + dims_key(cfg.dims);
  auto supervised = [&] {
    return cached(cache, "supervised/" + base_key, [&] {
      TrainReport rep;
      return train_supervised(d, cfg, rep);
    });
  };

  TaggerParams pre;
  if (kind == "supervised") {
    r.params = supervised();
    r.report.best_dev_f1 = dev_f1(r.params, d);
    r.report.best_checkpoint = "finetune";
  } else {
    if (kind == "self_training" || kind == "noisy_student") {
      pre = self_train(d, cfg, supervised(), "hard", kind == "noisy_student" ? cfg.sigma : 0.0, true, r.report);
    } else if (kind.rfind("wsl", 0) == 0) {
      pre = wsl_stage(d, cfg, kind, r.report);
    } else {
      const TaggerParams stage1 = cached(cache, "wsl/" + base_key + "/" + std::to_string(cfg.epochs), [&] {
        TrainReport rep;
        return wsl_stage(d, cfg, "wsl", rep);
      });
      const std::string mode = kind == "bond_soft" ? "soft" : kind == "bond_soft_high" ? "soft_high" : "hard";
      pre = self_train(d, cfg, stage1, mode, kind == "bond_noisy_student" ? cfg.sigma : 0.0, false, r.report);
    }
    r.params = cfg.finetune ? finetune(pre, d, cfg, r.report) : pre;
  }
  r.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Full pipeline for any method name: baselines, QUEACO and its ablations.
// The QUEACO teacher starts from the supervised model; the student starts
// from a fresh initialization.
inline MethodResult train_method(const std::string& method, const Dataset& d, TrainConfig cfg,
                                 ModelCache* cache = nullptr) {
  if (std::find(baseline_kinds().begin(), baseline_kinds().end(), method) != baseline_kinds().end())
    return train_baseline(method, d, cfg, cache);
  if (method == "queaco_no_feedback") cfg.student_feedback = false;
  else if (method == "queaco_no_noise") cfg.sigma = 0.0;
  else if (method == "queaco_no_refine") cfg.refine = false;
  else if (method == "queaco_no_finetune") cfg.finetune = false;
  else if (method != "queaco") fail("unknown method '", method, "'");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  using namespace train_detail;
  const TaggerDims tdims = cfg.teacher_dims.value_or(cfg.dims);
  const std::string base = std::to_string(cfg.seed) + "/";
  const TaggerParams teacher = cached(cache, "supervised/" + base + dims_key(tdims), [&] {
    TrainReport rep;
    return train_supervised(d, cfg, rep, tdims);
  });
  const TaggerParams student = initial_params(d, cfg, cfg.dims, 1);
  auto pre = queaco_pretrain(d, cfg, teacher, student);
  MethodResult r;
  r.report = std::move(pre.report);
  r.report.method = method;
  r.params = cfg.finetune ? finetune(pre.student, d, cfg, r.report) : pre.student;
  r.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace queaco
