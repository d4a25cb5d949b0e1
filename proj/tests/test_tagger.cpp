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

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"

namespace queaco {
namespace {

constexpr std::size_t kLex = 7, kTags = 5;
const TaggerDims kToy{3, 4, 1};

double grad_error(std::uint64_t seed, LossKind kind, double sigma, double tau, bool weighted) {
  std::mt19937_64 rng(seed);
  const TaggerParams p = init_params(kLex, kTags, kToy, seed);
  const auto b = oracle::toy_batch(rng, 3, kLex, kTags);
  const Labels labels = kind == LossKind::ce_soft_tempered ? Labels(b.soft) : Labels(b.y);
  std::vector<double> iw{0.5, 1.0, 2.0};
  std::vector<std::vector<double>> tw;
  for (const auto& x : b.x) {
    tw.emplace_back(x.size(), 1.0);
    tw.back()[0] = 0.0;
  }
  LossOptions opts;
  if (weighted) {
    opts.item_weights = iw;
    opts.token_weights = tw;
  }
  opts.temperature = tau;
  opts.noise_sigma = sigma;
  opts.noise_seed = seed * 31;
  const LossResult r = loss(p, b.x, labels, kind, opts);
  return oracle::gradient_rel_error(p, r.grad, [&](const TaggerParams& q) {
    return loss_value(q, b.x, labels, kind, opts);
  });
}

class GradientCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientCheck, AllLossKinds) {
  const std::uint64_t s = GetParam();
  EXPECT_LE(grad_error(s, LossKind::ce_hard, 0.0, 1.0, false), 1e-4);
  EXPECT_LE(grad_error(s, LossKind::ce_hard, 0.3, 1.0, true), 1e-4);
  EXPECT_LE(grad_error(s, LossKind::ce_soft_tempered, 0.0, 1.0, false), 1e-4);
  EXPECT_LE(grad_error(s, LossKind::ce_soft_tempered, 0.3, 0.5, true), 1e-4);
  EXPECT_LE(grad_error(s, LossKind::mse, 0.0, 1.0, false), 1e-4);
  EXPECT_LE(grad_error(s, LossKind::mse, 0.3, 1.0, true), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Range<std::uint64_t>(1, 13));

TEST(GradientCheck, WiderWindow) {
  std::mt19937_64 rng(5);
  const TaggerParams p = init_params(kLex, kTags, {2, 3, 2}, 5);
  const auto b = oracle::toy_batch(rng, 2, kLex, kTags);
  const LossResult r = loss(p, b.x, b.y, LossKind::ce_hard);
  EXPECT_LE(oracle::gradient_rel_error(p, r.grad,
                                       [&](const TaggerParams& q) { return loss_value(q, b.x, b.y, LossKind::ce_hard); }),
            1e-4);
}

TEST(InitParams, DeterministicAndCounted) {
  EXPECT_EQ(init_params(10, 7, {8, 16, 1}, 3).blocks, init_params(10, 7, {8, 16, 1}, 3).blocks);
  EXPECT_NE(init_params(10, 7, {8, 16, 1}, 3).blocks, init_params(10, 7, {8, 16, 1}, 4).blocks);
  const std::size_t lex = 10, k = 7;
  EXPECT_EQ(parameter_count(init_params(lex, k, {8, 16, 1}, 3).blocks), lex * 8 + (3 * 8) * 16 + 16 + 16 * k + k);
  EXPECT_THROW(init_params(0, 7, {8, 16, 1}, 3), Error);
}

TEST(Forward, ZeroScaleIsUniformAndRowsSumToOne) {
  const TaggerParams zero = init_params(kLex, kTags, kToy, 1, 0.0);
  const std::vector<TokenId> ids{1, 2, 3};
  const auto d0 = forward(zero, ids);
  for (double x : d0.probs) EXPECT_NEAR(x, 1.0 / kTags, 1e-15);

  const TaggerParams p = init_params(kLex, kTags, kToy, 2);
  const auto d = forward(p, ids, 0.5, 9);
  for (std::size_t j = 0; j < d.length; ++j) {
    double s = 0;
    for (std::size_t c = 0; c < kTags; ++c) s += d.row(j)[c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_EQ(forward(p, ids, 0.5, 9).probs, d.probs);
  EXPECT_NE(forward(p, ids, 0.5, 10).probs, d.probs);
  EXPECT_NE(forward(p, ids).probs, d.probs);
}

TEST(Loss, AnalyticValues) {
  const std::vector<std::vector<TokenId>> x{{1, 2}};
  const HardLabels y{{3, 0}};
  const TaggerParams uniform = init_params(kLex, kTags, kToy, 1, 0.0);
  EXPECT_NEAR(loss_value(uniform, x, y, LossKind::ce_hard), std::log(double(kTags)), 1e-12);

  TaggerParams sharp = uniform;
  sharp.blocks[kOutputBias].data[3] = 60.0;
  const HardLabels y3{{3, 3}};
  EXPECT_NEAR(loss_value(sharp, x, y3, LossKind::ce_hard), 0.0, 1e-12);
  EXPECT_NEAR(loss_value(sharp, x, y3, LossKind::mse), 0.0, 1e-12);
}

TEST(Loss, SelfTargetAtUnitTemperatureIsEntropy) {
  const TaggerParams p = init_params(kLex, kTags, kToy, 4);
  const std::vector<std::vector<TokenId>> x{{1, 2, 3}, {4}};
  SoftLabels target{forward(p, x[0]), forward(p, x[1])};
  double h = 0;
  std::size_t n = 0;
  for (const auto& d : target)
    for (std::size_t j = 0; j < d.length; ++j, ++n)
      for (std::size_t c = 0; c < kTags; ++c) h -= d.row(j)[c] * std::log(d.row(j)[c]);
  EXPECT_NEAR(loss_value(p, x, target, LossKind::ce_soft_tempered), h / double(n), 1e-12);
}

TEST(Loss, TemperedTargetSharpens) {
  const double in[3] = {0.5, 0.3, 0.2};
  double out[3];
  temper_row(in, out, 3, 0.5);
  const double z = 0.25 + 0.09 + 0.04;
  EXPECT_NEAR(out[0], 0.25 / z, 1e-12);
  EXPECT_NEAR(out[2], 0.04 / z, 1e-12);
}

TEST(Loss, ShapeErrors) {
  const TaggerParams p = init_params(kLex, kTags, kToy, 1);
  const std::vector<std::vector<TokenId>> x{{1, 2}};
  EXPECT_THROW(loss_value(p, x, HardLabels{{1}}, LossKind::ce_hard), Error);
  EXPECT_THROW(loss_value(p, x, HardLabels{{1, 2}, {1}}, LossKind::ce_hard), Error);
  EXPECT_THROW(loss_value(p, x, HardLabels{{1, 2}}, LossKind::ce_soft_tempered), Error);
}

TEST(Step, FixedPoints) {
  const TaggerParams p = init_params(kLex, kTags, kToy, 1);
  AdamState s;
  const ParameterSet zero = zeros_like(p.blocks);
  EXPECT_EQ(step(p, zero, s, 0.1).blocks, p.blocks);
  std::mt19937_64 rng(1);
  const auto b = oracle::toy_batch(rng, 2, kLex, kTags);
  const auto g = loss(p, b.x, b.y, LossKind::ce_hard).grad;
  AdamState s2;
  EXPECT_EQ(step(step(p, g, s2, 0.0), g, s2, 0.0).blocks, p.blocks);
}

TEST(Step, HandComputedAdam) {
  ParameterSet p{Tensor("w", 1, 2)};
  p[0].data = {1.0, -2.0};
  ParameterSet g{Tensor("w", 1, 2)};
  g[0].data = {0.5, -0.1};
  AdamState s;
  const double lr = 0.1, eps = 1e-8;
  auto p1 = adam_step(p, g, s, lr);
  // Bias-corrected first step: update = lr * g / (|g| + eps).
  EXPECT_NEAR(p1[0].data[0], 1.0 - lr * 0.5 / (0.5 + eps), 1e-15);
  EXPECT_NEAR(p1[0].data[1], -2.0 + lr * 0.1 / (0.1 + eps), 1e-15);
  EXPECT_EQ(p[0].data[0], 1.0);
  g[0].data = {-0.5, 0.3};
  auto p2 = adam_step(p1, g, s, lr);
  const double m = 0.9 * 0.05 + 0.1 * -0.5, v = 0.999 * 0.00025 + 0.001 * 0.25;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p2[0].data[0], p1[0].data[0] - lr * mhat / (std::sqrt(vhat) + eps), 1e-15);
}

TEST(Step, NonFiniteGradientNamesBlock) {
  const TaggerParams p = init_params(kLex, kTags, kToy, 1);
  ParameterSet g = zeros_like(p.blocks);
  g[kHiddenBias].data[0] = NAN;
  AdamState s;
  try {
    step(p, g, s, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(p.blocks[kHiddenBias].name), std::string::npos);
  }
}

TEST(Predict, TieBreakAndThresholds) {
  const TaggerParams zero = init_params(kLex, kTags, kToy, 1, 0.0);
  const std::vector<TokenId> ids{1, 2};
  const auto u = predict(zero, ids, 0.0);
  EXPECT_EQ(u.tags, (std::vector<TagId>{0, 0}));
  EXPECT_EQ(u.low_confidence, (std::vector<bool>{false, false}));
  const TaggerParams p = init_params(kLex, kTags, kToy, 3);
  EXPECT_EQ(predict(p, ids, 1.0).low_confidence, (std::vector<bool>{true, true}));
  EXPECT_EQ(predict(p, ids, 0.0).low_confidence, (std::vector<bool>{false, false}));
}

TEST(Predict, InvariantUnderSharedShift) {
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const TaggerParams p = init_params(kLex, kTags, kToy, seed);
    TaggerParams shifted = p;
    const double c = double(rng() % 100) - 50.0;
    for (auto& x : shifted.blocks[kOutputBias].data) x += c;
    const std::vector<TokenId> ids{TokenId(seed % kLex), 3, 1, 6};
    EXPECT_EQ(predict(p, ids).tags, predict(shifted, ids).tags);
  }
}

TEST(Checkpoint, RoundTrip) {
  Lexicon lex;
  lex.add("lg");
  lex.add("tv");
  const TaggerParams p = init_params(lex.size(), kTags, kToy, 5);
  const auto path = (std::filesystem::temp_directory_path() / "queaco_test_ckpt.json").string();
  store_checkpoint({p, lex, TagVocab({"a", "b"})}, path);
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.params.blocks, p.blocks);
  EXPECT_EQ(ck.lexicon.tokens(), lex.tokens());
  EXPECT_EQ(ck.vocab->entity_types(), (std::vector<std::string>{"a", "b"}));
  write_text_file(path, R"({"format":"other"})");
  EXPECT_THROW(load_checkpoint(path), Error);
}

}  // namespace
}  // namespace queaco
