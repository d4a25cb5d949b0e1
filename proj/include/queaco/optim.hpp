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

// Dense named parameter blocks and the Adam optimizer shared by the tagger
// and the product-type classifier.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "queaco/common.hpp"

namespace queaco {

// Row-major matrix (a vector when cols == 1).
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  bool operator==(const Tensor&) const = default;
};

using ParameterSet = std::vector<Tensor>;

inline std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& t : params) n += t.size();
  return n;
}

inline ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const auto& t : params) out.emplace_back(t.name, t.rows, t.cols);
  return out;
}

inline void set_zero(ParameterSet& params) {
  for (auto& t : params) std::fill(t.data.begin(), t.data.end(), 0.0);
}

inline void check_same_shape(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) fail("parameter sets differ in block count");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols)
      fail("shape mismatch in block '", a[i].name, "'");
}

// acc += scale * other
inline void axpy(ParameterSet& acc, const ParameterSet& other, double scale = 1.0) {
  check_same_shape(acc, other);
  for (std::size_t i = 0; i < acc.size(); ++i)
    for (std::size_t k = 0; k < acc[i].data.size(); ++k) acc[i].data[k] += scale * other[i].data[k];
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParameterSet m;
  ParameterSet v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(const ParameterSet& params) : m(zeros_like(params)), v(zeros_like(params)) {}
};

// One Adam update. Returns new parameters; the inputs are left untouched so
// the pre-step snapshot stays usable.
inline ParameterSet adam_step(const ParameterSet& params, const ParameterSet& grads,
                              AdamState& state, double lr, const AdamConfig& cfg = {}) {
  check_same_shape(params, grads);
  for (const auto& g : grads)
    for (double x : g.data)
      if (!std::isfinite(x)) fail("non-finite gradient in parameter block '", g.name, "'");
  if (state.m.empty()) state = AdamState(params);
  check_same_shape(params, state.m);

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  ParameterSet out = params;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.m[b].data;
    auto& v = state.v[b].data;
    const auto& g = grads[b].data;
    auto& p = out[b].data;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  return out;
}

}  // namespace queaco
