// Copyright 2026 The shacira Authors
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shacira/common.hpp"

namespace shacira {

// Dense parameter array with a same-shape gradient accumulator.
template <typename Real>
struct Tensor {
  std::string name;
  std::vector<size_t> shape;
  std::vector<Real> values;
  std::vector<Real> grad;

  Tensor() = default;
  Tensor(std::string n, std::vector<size_t> s) : name(std::move(n)), shape(std::move(s)) {
    size_t total = 1;
    for (size_t e : shape) total *= e;
    values.assign(total, Real(0));
    grad.assign(total, Real(0));
  }

  size_t size() const { return values.size(); }
  size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  Real& at(size_t r, size_t c) { return values[r * cols() + c]; }
  Real at(size_t r, size_t c) const { return values[r * cols() + c]; }
  Real& gat(size_t r, size_t c) { return grad[r * cols() + c]; }

  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
};

template <typename Real>
struct AdamState {
  std::vector<Real> m, v;
  int64_t t = 0;
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);

  explicit AdamState(size_t n = 0) : m(n, Real(0)), v(n, Real(0)) {}
};

// Standard Adam with bias correction. Zeroes the gradient afterwards.
template <typename Real>
void adam_step(Tensor<Real>& p, AdamState<Real>& s, Real lr) {
  if (!(lr > Real(0))) throw ConfigError("adam_step: lr must be positive");
  if (s.m.size() != p.size()) throw ConfigError("adam_step: state/param shape mismatch");
  for (size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(static_cast<double>(p.grad[i])))
      throw NumericError("adam_step: non-finite gradient in '" + p.name + "'");
  }
  s.t += 1;
  const Real bc1 = Real(1) - std::pow(s.beta1, Real(s.t));
  const Real bc2 = Real(1) - std::pow(s.beta2, Real(s.t));
  for (size_t i = 0; i < p.size(); ++i) {
    const Real g = p.grad[i];
    s.m[i] = s.beta1 * s.m[i] + (Real(1) - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (Real(1) - s.beta2) * g * g;
    const Real mhat = s.m[i] / bc1;
    const Real vhat = s.v[i] / bc2;
    p.values[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
    p.grad[i] = Real(0);
  }
}

// Max relative error between central differences and an analytic gradient.
// f is a scalar field over the flat coordinate vector x.
template <typename Real, typename F>
Real finite_diff_check(const F& f, std::vector<Real> x, std::span<const Real> analytic, Real h) {
  if (analytic.size() != x.size()) throw ConfigError("finite_diff_check: size mismatch");
  if (!(h > Real(0))) throw ConfigError("finite_diff_check: h must be positive");
  Real worst = Real(0);
  for (size_t i = 0; i < x.size(); ++i) {
    const Real xi = x[i];
    x[i] = xi + h;
    const Real fp = f(std::span<const Real>(x));
    x[i] = xi - h;
    const Real fm = f(std::span<const Real>(x));
    x[i] = xi;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      throw NumericError("finite_diff_check: non-finite probe at coordinate " + std::to_string(i));
    const Real cd = (fp - fm) / (Real(2) * h);
    const Real denom = std::max({Real(1e-12), std::abs(analytic[i]), std::abs(cd)});
    worst = std::max(worst, std::abs(cd - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace shacira
