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

// Compact differentiable token classifier.
//
// Each token is embedded, the embeddings of a fixed window of neighbours
// (zero-padded at the edges) are concatenated, passed through one tanh layer
// and projected to one score per BIO tag; a softmax turns scores into a tag
// distribution. Gradients are exact (hand-written reverse pass).
//
// Checkpoint format (JSON, version 1):
//   {"format": "queaco-tagger", "version": 1,
//    "dims": {"embed": d, "hidden": h, "window": w},
//    "lexicon_size": V, "num_tags": K,
//    "blocks": [{"name": str, "shape": [rows, cols], "data": [double...]}...],
//    "lexicon": [token...]          (optional, id order, id 0 = <unk>)
//    "entity_types": [str...]}      (optional)
// Blocks appear in the order embedding [V x d], hidden_weight [(2w+1)d x h],
// hidden_bias [1 x h], output_weight [h x K], output_bias [1 x K]. Doubles are
// written in shortest round-trip form, so load(store(p)) == p bitwise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "queaco/corpus.hpp"
#include "queaco/optim.hpp"

namespace queaco {

struct TaggerDims {
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t window = 1;

  std::size_t input() const { return (2 * window + 1) * embed; }
  bool operator==(const TaggerDims&) const = default;
};

enum TaggerBlock : std::size_t {
  kEmbedding = 0,
  kHiddenWeight = 1,
  kHiddenBias = 2,
  kOutputWeight = 3,
  kOutputBias = 4,
};

struct TaggerParams {
  TaggerDims dims;
  std::size_t lexicon_size = 0;
  std::size_t num_tags = 0;
  ParameterSet blocks;

  const Tensor& embedding() const { return blocks[kEmbedding]; }
  const Tensor& hidden_weight() const { return blocks[kHiddenWeight]; }
  const Tensor& hidden_bias() const { return blocks[kHiddenBias]; }
  const Tensor& output_weight() const { return blocks[kOutputWeight]; }
  const Tensor& output_bias() const { return blocks[kOutputBias]; }

  std::size_t parameter_count() const { return queaco::parameter_count(blocks); }
  bool operator==(const TaggerParams&) const = default;
};

inline ParameterSet tagger_blocks(std::size_t lexicon_size, std::size_t num_tags,
                                  const TaggerDims& dims) {
  ParameterSet b;
  b.emplace_back("embedding", lexicon_size, dims.embed);
  b.emplace_back("hidden_weight", dims.input(), dims.hidden);
  b.emplace_back("hidden_bias", 1, dims.hidden);
  b.emplace_back("output_weight", dims.hidden, num_tags);
  b.emplace_back("output_bias", 1, num_tags);
  return b;
}

// Uniform init: embeddings in [-0.5s, 0.5s], weights Glorot-uniform times s,
// biases zero.
inline TaggerParams init_params(std::size_t lexicon_size, std::size_t num_tags,
                                const TaggerDims& dims, std::uint64_t seed, double scale = 1.0) {
  if (lexicon_size == 0 || num_tags == 0 || dims.embed == 0 || dims.hidden == 0)
    fail("tagger dimensions must be positive");
  TaggerParams p{dims, lexicon_size, num_tags, tagger_blocks(lexicon_size, num_tags, dims)};
  std::mt19937_64 rng(mix_seed(seed, 0x7a99));
  auto fill = [&](Tensor& t, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : t.data) x = scale * u(rng);
  };
  fill(p.blocks[kEmbedding], 0.5);
  fill(p.blocks[kHiddenWeight], std::sqrt(6.0 / double(dims.input() + dims.hidden)));
  fill(p.blocks[kOutputWeight], std::sqrt(6.0 / double(dims.hidden + num_tags)));
  return p;
}

// Row-major [length x num_tags] probabilities.
struct TagDistribution {
  std::size_t length = 0;
  std::size_t num_tags = 0;
  std::vector<double> probs;

  TagDistribution() = default;
  TagDistribution(std::size_t m, std::size_t k) : length(m), num_tags(k), probs(m * k, 0.0) {}

  double* row(std::size_t j) { return probs.data() + j * num_tags; }
  const double* row(std::size_t j) const { return probs.data() + j * num_tags; }
};

namespace detail {

inline void softmax_inplace(double* z, std::size_t k) {
  double mx = z[0];
  for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z[c]);
  double sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    z[c] = std::exp(z[c] - mx);
    sum += z[c];
  }
  for (std::size_t c = 0; c < k; ++c) z[c] /= sum;
}

// Activations of one sequence, kept for the reverse pass.
struct ForwardCache {
  std::size_t length = 0;
  std::vector<double> emb;     // [M x d], noise included
  std::vector<double> hidden;  // [M x h], post-tanh
  TagDistribution dist;
};

inline void forward_cache(const TaggerParams& p, std::span<const TokenId> ids, double sigma,
                          std::uint64_t noise_seed, ForwardCache& c) {
  const std::size_t m = ids.size(), d = p.dims.embed, h = p.dims.hidden, k = p.num_tags;
  const std::size_t w = p.dims.window;
  c.length = m;
  c.emb.assign(m * d, 0.0);
  c.hidden.assign(m * h, 0.0);
  c.dist = TagDistribution(m, k);

  const Tensor& E = p.embedding();
  for (std::size_t j = 0; j < m; ++j) {
    TokenId id = ids[j];
    if (id < 0 || std::size_t(id) >= p.lexicon_size) fail("token id ", id, " outside lexicon");
    std::copy_n(E.row(std::size_t(id)), d, c.emb.data() + j * d);
  }
  if (sigma > 0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& x : c.emb) x += noise(rng);
  }

  const Tensor& W1 = p.hidden_weight();
  const Tensor& b1 = p.hidden_bias();
  const Tensor& W2 = p.output_weight();
  const Tensor& b2 = p.output_bias();
  for (std::size_t j = 0; j < m; ++j) {
    double* a = c.hidden.data() + j * h;
    std::copy_n(b1.data.data(), h, a);
    for (std::size_t s = 0; s <= 2 * w; ++s) {
      const long pos = long(j) + long(s) - long(w);
      if (pos < 0 || pos >= long(m)) continue;
      const double* e = c.emb.data() + std::size_t(pos) * d;
      for (std::size_t q = 0; q < d; ++q) {
        const double ev = e[q];
        const double* wr = W1.row(s * d + q);
        for (std::size_t u = 0; u < h; ++u) a[u] += ev * wr[u];
      }
    }
    for (std::size_t u = 0; u < h; ++u) a[u] = std::tanh(a[u]);
    double* z = c.dist.row(j);
    std::copy_n(b2.data.data(), k, z);
    for (std::size_t u = 0; u < h; ++u) {
      const double hv = a[u];
      const double* wr = W2.row(u);
      for (std::size_t t = 0; t < k; ++t) z[t] += hv * wr[t];
    }
    softmax_inplace(z, k);
  }
}

// Accumulates the parameter gradient given dLoss/dScores ([M x K]).
inline void backward(const TaggerParams& p, std::span<const TokenId> ids, const ForwardCache& c,
                     const std::vector<double>& dscores, ParameterSet& grad) {
  const std::size_t m = c.length, d = p.dims.embed, h = p.dims.hidden, k = p.num_tags;
  const std::size_t w = p.dims.window;
  const Tensor& W1 = p.hidden_weight();
  const Tensor& W2 = p.output_weight();
  Tensor& gE = grad[kEmbedding];
  Tensor& gW1 = grad[kHiddenWeight];
  Tensor& gb1 = grad[kHiddenBias];
  Tensor& gW2 = grad[kOutputWeight];
  Tensor& gb2 = grad[kOutputBias];

  std::vector<double> da(h), demb(m * d, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double* dz = dscores.data() + j * k;
    const double* hid = c.hidden.data() + j * h;
    bool any = false;
    for (std::size_t t = 0; t < k; ++t) any |= dz[t] != 0.0;
    if (!any) continue;
    for (std::size_t t = 0; t < k; ++t) gb2.data[t] += dz[t];
    for (std::size_t u = 0; u < h; ++u) {
      double* gw = gW2.row(u);
      const double* wr = W2.row(u);
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) {
        gw[t] += hid[u] * dz[t];
        acc += wr[t] * dz[t];
      }
      da[u] = acc * (1.0 - hid[u] * hid[u]);
      gb1.data[u] += da[u];
    }
    for (std::size_t s = 0; s <= 2 * w; ++s) {
      const long pos = long(j) + long(s) - long(w);
      if (pos < 0 || pos >= long(m)) continue;
      const double* e = c.emb.data() + std::size_t(pos) * d;
      double* de = demb.data() + std::size_t(pos) * d;
      for (std::size_t q = 0; q < d; ++q) {
        double* gw = gW1.row(s * d + q);
        const double* wr = W1.row(s * d + q);
        const double ev = e[q];
        double acc = 0;
        for (std::size_t u = 0; u < h; ++u) {
          gw[u] += ev * da[u];
          acc += wr[u] * da[u];
        }
        de[q] += acc;
      }
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    double* ge = gE.row(std::size_t(ids[j]));
    const double* de = demb.data() + j * d;
    for (std::size_t q = 0; q < d; ++q) ge[q] += de[q];
  }
}

}  // namespace detail

// Per-sequence noise seed derived from a batch-level seed.
inline std::uint64_t sequence_noise_seed(std::uint64_t batch_seed, std::size_t index) {
  return mix_seed(batch_seed, index);
}

// Tag distribution of one sequence. With sigma > 0 every token embedding is
// perturbed by i.i.d. N(0, sigma^2) noise drawn from noise_seed.
inline TagDistribution forward(const TaggerParams& params, std::span<const TokenId> ids,
                               double sigma = 0.0, std::uint64_t noise_seed = 0) {
  detail::ForwardCache c;
  detail::forward_cache(params, ids, sigma, noise_seed, c);
  return std::move(c.dist);
}

enum class LossKind { ce_hard, ce_soft_tempered, mse };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::ce_hard: return "ce_hard";
    case LossKind::ce_soft_tempered: return "ce_soft_tempered";
    case LossKind::mse: return "mse";
  }
  return "?";
}

using TokenBatch = std::span<const std::vector<TokenId>>;
using HardLabels = std::vector<std::vector<TagId>>;
using SoftLabels = std::vector<TagDistribution>;
using Labels = std::variant<HardLabels, SoftLabels>;

struct LossOptions {
  // Per-item multipliers; empty means 1.
  std::span<const double> item_weights;
  // Per-token multipliers (0 masks a token out of the mean); empty means 1.
  std::span<const std::vector<double>> token_weights;
  // ce_soft_tempered sharpens each target row to q ∝ target^(1/temperature),
  // i.e. softmax(scores / temperature) when the target is softmax(scores).
  double temperature = 1.0;
  // Gaussian noise on the predicting pass.
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

// Soft target row at temperature tau, stop-gradient.
inline void temper_row(const double* in, double* out, std::size_t k, double tau) {
  if (tau == 1.0) {
    std::copy_n(in, k, out);
    return;
  }
  double mx = -INFINITY;
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = in[c] > 0 ? std::log(in[c]) / tau : -INFINITY;
    mx = std::max(mx, out[c]);
  }
  double sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = std::isinf(out[c]) ? 0.0 : std::exp(out[c] - mx);
    sum += out[c];
  }
  for (std::size_t c = 0; c < k; ++c) out[c] /= sum;
}

// Mean loss over (unmasked) tokens of the batch. Adds scale * dLoss/dParams
// into `grad` and returns the loss value.
inline double loss_into(const TaggerParams& params, TokenBatch batch, const Labels& labels,
                        LossKind kind, const LossOptions& opts, ParameterSet& grad,
                        double scale = 1.0) {
  const std::size_t k = params.num_tags;
  const HardLabels* hard = std::get_if<HardLabels>(&labels);
  const SoftLabels* soft = std::get_if<SoftLabels>(&labels);
  if (kind == LossKind::ce_soft_tempered && !soft) fail("ce_soft_tempered needs soft labels");
  if (kind != LossKind::ce_soft_tempered && !hard) fail(to_string(kind), " needs hard labels");
  const std::size_t n_labels = hard ? hard->size() : soft->size();
  if (n_labels != batch.size()) fail("batch has ", batch.size(), " items but ", n_labels, " labels");
  if (!opts.item_weights.empty() && opts.item_weights.size() != batch.size())
    fail("item weights length ", opts.item_weights.size(), " != batch size ", batch.size());
  if (!opts.token_weights.empty() && opts.token_weights.size() != batch.size())
    fail("token weights length ", opts.token_weights.size(), " != batch size ", batch.size());
  if (!(opts.temperature > 0)) fail("temperature must be positive");
  if (!grad.empty()) check_same_shape(grad, params.blocks);

  auto token_weight = [&](std::size_t i, std::size_t j) {
    return opts.token_weights.empty() ? 1.0 : opts.token_weights[i][j];
  };
  double denom = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t m = batch[i].size();
    const std::size_t lm = hard ? (*hard)[i].size() : (*soft)[i].length;
    if (lm != m) fail("item ", i, ": ", m, " tokens but ", lm, " labels");
    if (soft && (*soft)[i].num_tags != k) fail("item ", i, ": soft label width != tag count");
    if (!opts.token_weights.empty() && opts.token_weights[i].size() != m)
      fail("item ", i, ": token weight length mismatch");
    for (std::size_t j = 0; j < m; ++j) denom += token_weight(i, j) != 0.0 ? 1.0 : 0.0;
  }
  if (denom == 0) return 0.0;

  const bool want_grad = !grad.empty() && scale != 0.0;
  double total = 0;
  detail::ForwardCache cache;
  std::vector<double> dz, target(k);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ids = batch[i];
    const std::size_t m = ids.size();
    detail::forward_cache(params, ids, opts.noise_sigma,
                          sequence_noise_seed(opts.noise_seed, i), cache);
    dz.assign(m * k, 0.0);
    const double iw = opts.item_weights.empty() ? 1.0 : opts.item_weights[i];
    for (std::size_t j = 0; j < m; ++j) {
      const double wt = iw * token_weight(i, j);
      if (wt == 0.0) continue;
      const double* p = cache.dist.row(j);
      double* g = dz.data() + j * k;
      double l = 0;
      switch (kind) {
        case LossKind::ce_hard: {
          const TagId y = (*hard)[i][j];
          if (y < 0 || std::size_t(y) >= k) fail("label ", y, " out of range");
          l = -std::log(std::max(p[y], 1e-300));
          for (std::size_t c = 0; c < k; ++c) g[c] = p[c];
          g[y] -= 1.0;
          break;
        }
        case LossKind::ce_soft_tempered: {
          temper_row((*soft)[i].row(j), target.data(), k, opts.temperature);
          for (std::size_t c = 0; c < k; ++c) {
            if (target[c] > 0) l -= target[c] * std::log(std::max(p[c], 1e-300));
            g[c] = p[c] - target[c];
          }
          break;
        }
        case LossKind::mse: {
          const TagId y = (*hard)[i][j];
          if (y < 0 || std::size_t(y) >= k) fail("label ", y, " out of range");
          double gp = 0;
          for (std::size_t c = 0; c < k; ++c) {
            const double diff = p[c] - (c == std::size_t(y) ? 1.0 : 0.0);
            l += diff * diff;
            gp += 2 * diff * p[c];
          }
          for (std::size_t c = 0; c < k; ++c) {
            const double diff = p[c] - (c == std::size_t(y) ? 1.0 : 0.0);
            g[c] = p[c] * (2 * diff - gp);
          }
          break;
        }
      }
      total += wt * l;
      const double f = scale * wt / denom;
      for (std::size_t c = 0; c < k; ++c) g[c] *= f;
    }
    if (want_grad) detail::backward(params, ids, cache, dz, grad);
  }
  return total / denom;
}

struct LossResult {
  double value = 0;
  ParameterSet grad;
};

inline LossResult loss(const TaggerParams& params, TokenBatch batch, const Labels& labels,
                       LossKind kind, const LossOptions& opts = {}) {
  LossResult r;
  r.grad = zeros_like(params.blocks);
  r.value = loss_into(params, batch, labels, kind, opts, r.grad);
  return r;
}

// Loss value only.
inline double loss_value(const TaggerParams& params, TokenBatch batch, const Labels& labels,
                         LossKind kind, const LossOptions& opts = {}) {
  ParameterSet none;
  return loss_into(params, batch, labels, kind, opts, none);
}

inline TaggerParams step(const TaggerParams& params, const ParameterSet& grad, AdamState& state,
                         double lr) {
  TaggerParams out = params;
  out.blocks = adam_step(params.blocks, grad, state, lr);
  return out;
}

struct Prediction {
  std::vector<TagId> tags;
  std::vector<double> confidence;
  std::vector<bool> low_confidence;
};

inline Prediction predict_from(const TagDistribution& dist, std::optional<double> epsilon) {
  Prediction out;
  out.tags.resize(dist.length);
  out.confidence.resize(dist.length);
  out.low_confidence.assign(dist.length, false);
  for (std::size_t j = 0; j < dist.length; ++j) {
    const double* p = dist.row(j);
    std::size_t best = 0;
    for (std::size_t c = 1; c < dist.num_tags; ++c)
      if (p[c] > p[best]) best = c;
    out.tags[j] = TagId(best);
    out.confidence[j] = p[best];
    if (epsilon) out.low_confidence[j] = p[best] < *epsilon;
  }
  return out;
}

// Per-token argmax (lowest tag index wins ties). With epsilon, tokens whose
// top probability is below it are flagged low-confidence.
inline Prediction predict(const TaggerParams& params, std::span<const TokenId> ids,
                          std::optional<double> epsilon = std::nullopt) {
  return predict_from(forward(params, ids), epsilon);
}

// ---------------------------------------------------------------------------
// Checkpoints.

struct Checkpoint {
  TaggerParams params;
  Lexicon lexicon;
  std::optional<TagVocab> vocab;
};

inline nlohmann::json params_to_json(const TaggerParams& p) {
  nlohmann::json j;
  j["format"] = "queaco-tagger";
  j["version"] = 1;
  j["dims"] = {{"embed", p.dims.embed}, {"hidden", p.dims.hidden}, {"window", p.dims.window}};
  j["lexicon_size"] = p.lexicon_size;
  j["num_tags"] = p.num_tags;
  j["blocks"] = nlohmann::json::array();
  for (const auto& t : p.blocks)
    j["blocks"].push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"data", t.data}});
  return j;
}

inline TaggerParams params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "queaco-tagger") fail("not a queaco-tagger checkpoint");
  if (j.value("version", 0) != 1) fail("unsupported checkpoint version ", j.value("version", 0));
  TaggerParams p;
  p.dims.embed = j.at("dims").at("embed").get<std::size_t>();
  p.dims.hidden = j.at("dims").at("hidden").get<std::size_t>();
  p.dims.window = j.at("dims").at("window").get<std::size_t>();
  p.lexicon_size = j.at("lexicon_size").get<std::size_t>();
  p.num_tags = j.at("num_tags").get<std::size_t>();
  p.blocks = tagger_blocks(p.lexicon_size, p.num_tags, p.dims);
  const auto& blocks = j.at("blocks");
  if (blocks.size() != p.blocks.size()) fail("checkpoint has ", blocks.size(), " blocks, expected 5");
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    Tensor& t = p.blocks[b];
    const auto& jb = blocks[b];
    if (jb.at("name").get<std::string>() != t.name) fail("checkpoint block ", b, " is not '", t.name, "'");
    auto shape = jb.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols)
      fail("checkpoint block '", t.name, "' has wrong shape");
    t.data = jb.at("data").get<std::vector<double>>();
    if (t.data.size() != t.rows * t.cols) fail("checkpoint block '", t.name, "' has wrong size");
  }
  return p;
}

inline void store_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::json j = params_to_json(ck.params);
  j["lexicon"] = ck.lexicon.tokens();
  if (ck.vocab) j["entity_types"] = ck.vocab->entity_types();
  write_text_file(path, j.dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto j = read_json_file(path);
  Checkpoint ck{params_from_json(j), Lexicon{}, std::nullopt};
  if (j.contains("lexicon"))
    ck.lexicon = Lexicon::from_tokens(j.at("lexicon").get<std::vector<std::string>>());
  if (j.contains("entity_types"))
    ck.vocab = TagVocab(j.at("entity_types").get<std::vector<std::string>>());
  return ck;
}

}  // namespace queaco
