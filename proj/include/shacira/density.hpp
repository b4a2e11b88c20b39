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
#include <numeric>
#include <span>
#include <vector>

#include "shacira/common.hpp"
#include "shacira/rng.hpp"
#include "shacira/tensor.hpp"

namespace shacira {

// Monotone univariate CDF network, one instance per latent dimension.
// Four stages 1 -> 3 -> 3 -> 3 -> 1: each stage applies softplus(W) x + b,
// the first three gate with x + tanh(a) * tanh(x), and a final sigmoid
// squashes to (0,1). Softplus keeps every effective weight positive and
// |tanh(a)| < 1 keeps each gate increasing, so dc/dx >= 0 structurally.
namespace density {

inline constexpr int kStages = 4;
inline constexpr int kHidden = 3;
inline constexpr int kDims[kStages + 1] = {1, kHidden, kHidden, kHidden, 1};

// Flat parameter layout per stage k: W_k (out x in), b_k (out), then for
// k < kStages-1 the gate a_k (out).
inline constexpr int param_count() {
  int n = 0;
  for (int k = 0; k < kStages; ++k) {
    n += kDims[k + 1] * kDims[k] + kDims[k + 1];
    if (k < kStages - 1) n += kDims[k + 1];
  }
  return n;
}
inline constexpr int kParamCount = param_count();

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

// Per-evaluation intermediates retained for the backward pass.
struct CdfTrace {
  double in[kStages][kHidden];   // stage inputs
  double pre[kStages][kHidden];  // softplus(W) x + b
  double y = 0.0;                // final pre-sigmoid scalar
  double c = 0.0;                // sigmoid(y)
};

template <typename Real>
double cdf_forward(std::span<const Real> params, double x, CdfTrace* trace) {
  double v[kHidden] = {x, 0.0, 0.0};
  int off = 0;
  CdfTrace local;
  CdfTrace& tr = trace ? *trace : local;
  for (int k = 0; k < kStages; ++k) {
    const int in_n = kDims[k], out_n = kDims[k + 1];
    double u[kHidden] = {0.0, 0.0, 0.0};
    for (int i = 0; i < in_n; ++i) tr.in[k][i] = v[i];
    for (int j = 0; j < out_n; ++j) {
      double acc = double(params[off + out_n * in_n + j]);  // bias
      for (int i = 0; i < in_n; ++i)
        acc += softplus(double(params[off + j * in_n + i])) * v[i];
      u[j] = acc;
    }
    off += out_n * in_n + out_n;
    for (int j = 0; j < out_n; ++j) tr.pre[k][j] = u[j];
    if (k < kStages - 1) {
      for (int j = 0; j < out_n; ++j) {
        const double ga = std::tanh(double(params[off + j]));
        v[j] = u[j] + ga * std::tanh(u[j]);
      }
      off += out_n;
    } else {
      v[0] = u[0];
    }
  }
  tr.y = v[0];
  tr.c = 1.0 / (1.0 + std::exp(-v[0]));
  return tr.c;
}

// Accumulates d(c)/d(params) * upstream into dparams and returns
// d(c)/dx * upstream.
template <typename Real>
double cdf_backward(std::span<const Real> params, const CdfTrace& tr, double upstream,
                    std::span<Real> dparams) {
  double dv[kHidden] = {upstream * tr.c * (1.0 - tr.c), 0.0, 0.0};
  // Walk stages in reverse; recompute the per-stage parameter offsets.
  int offs[kStages];
  int off = 0;
  for (int k = 0; k < kStages; ++k) {
    offs[k] = off;
    off += kDims[k + 1] * kDims[k] + kDims[k + 1];
    if (k < kStages - 1) off += kDims[k + 1];
  }
  for (int k = kStages - 1; k >= 0; --k) {
    const int in_n = kDims[k], out_n = kDims[k + 1];
    const int wo = offs[k];
    double du[kHidden];
    if (k < kStages - 1) {
      const int ao = wo + out_n * in_n + out_n;
      for (int j = 0; j < out_n; ++j) {
        const double araw = double(params[ao + j]);
        const double ga = std::tanh(araw);
        const double tu = std::tanh(tr.pre[k][j]);
        du[j] = dv[j] * (1.0 + ga * (1.0 - tu * tu));
        if (!dparams.empty()) dparams[ao + j] += Real(dv[j] * tu * (1.0 - ga * ga));
      }
    } else {
      du[0] = dv[0];
    }
    double dnext[kHidden] = {0.0, 0.0, 0.0};
    for (int j = 0; j < out_n; ++j) {
      if (!dparams.empty()) dparams[wo + out_n * in_n + j] += Real(du[j]);  // bias
      for (int i = 0; i < in_n; ++i) {
        const double wraw = double(params[wo + j * in_n + i]);
        const double w = softplus(wraw);
        const double sig = 1.0 / (1.0 + std::exp(-wraw));  // d softplus
        if (!dparams.empty()) dparams[wo + j * in_n + i] += Real(du[j] * tr.in[k][i] * sig);
        dnext[i] += du[j] * w;
      }
    }
    for (int i = 0; i < kHidden; ++i) dv[i] = dnext[i];
  }
  return dv[0];
}

// Uniform-spanning initialization: per-stage effective weights are set so the
// composite pre-sigmoid slope is about 4/scale, i.e. the initial CDF sweeps
// (0,1) over roughly [-scale, scale] and every symbol in that range starts
// with non-vanishing mass. Biases uniform in (-0.5, 0.5), gates zero.
template <typename Real>
void init_params(std::span<Real> params, SeededRng rng) {
  const double scale = 10.0;
  const double stage_gain = std::pow(4.0 / scale, 1.0 / kStages);
  int off = 0;
  uint64_t ctr = 0;
  for (int k = 0; k < kStages; ++k) {
    const int in_n = kDims[k], out_n = kDims[k + 1];
    const double w0 = std::log(std::expm1(stage_gain / in_n));
    for (int i = 0; i < out_n * in_n; ++i) params[off + i] = Real(w0);
    off += out_n * in_n;
    for (int j = 0; j < out_n; ++j) params[off + j] = Real(rng.uniform_at(ctr++) - 0.5);
    off += out_n;
    if (k < kStages - 1) {
      for (int j = 0; j < out_n; ++j) params[off + j] = Real(0);
      off += out_n;
    }
  }
}

}  // namespace density

inline constexpr double kPmfFloor = 1e-9;

template <typename Real>
double cdf(std::span<const Real> params, double x) {
  return density::cdf_forward(params, x, nullptr);
}

// P(q) = c(q + 1/2) - c(q - 1/2), floored before any logarithm.
template <typename Real>
double pmf(std::span<const Real> params, double q) {
  return std::max(cdf(params, q + 0.5) - cdf(params, q - 0.5), kPmfFloor);
}

// Self-information of one noisy latent in bits: -log2 P(x). Accumulates
// upstream-scaled gradients into dparams and returns d/dx via *dx. Gradients
// vanish where the PMF floor is active.
template <typename Real>
double info_loss_element(std::span<const Real> params, double x, double upstream, double* dx,
                         std::span<Real> dparams) {
  density::CdfTrace hi, lo;
  const double chi = density::cdf_forward(params, x + 0.5, &hi);
  const double clo = density::cdf_forward(params, x - 0.5, &lo);
  const double p_raw = chi - clo;
  const double p = std::max(p_raw, kPmfFloor);
  const double bits = -std::log2(p);
  if (dx) *dx = 0.0;
  if (p_raw > kPmfFloor) {
    const double dp = -upstream / (p * std::log(2.0));
    const double dxhi = density::cdf_backward(params, hi, dp, dparams);
    const double dxlo = density::cdf_backward(params, lo, -dp, dparams);
    if (dx) *dx = dxhi + dxlo;
  }
  return bits;
}

// Frozen integer-frequency table for the range coder.
struct PmfTable {
  int32_t q_min = 0;
  int32_t q_max = 0;
  uint32_t precision = 16;  // frequencies sum to 1 << precision
  std::vector<uint32_t> freq;
  std::vector<uint32_t> cum;  // size freq.size() + 1, cum[0] = 0

  uint32_t total() const { return 1u << precision; }
  size_t symbols() const { return freq.size(); }
  bool contains(int64_t q) const { return q >= q_min && q <= q_max; }

  void rebuild_cum() {
    cum.assign(freq.size() + 1, 0);
    for (size_t i = 0; i < freq.size(); ++i) cum[i + 1] = cum[i] + freq[i];
  }
};

// Quantizes a PMF over [q_min, q_max] into integer frequencies summing to
// exactly 2^precision. Every symbol keeps frequency >= 1; the remainder is
// apportioned by largest fractional part, ties broken by lower index.
template <typename PmfFn>
PmfTable build_pmf_table(const PmfFn& pmf_fn, int32_t q_min, int32_t q_max,
                         uint32_t precision = 16) {
  if (q_min > q_max) throw ConfigError("build_pmf_table: empty symbol range");
  const size_t n = size_t(int64_t(q_max) - q_min + 1);
  const uint64_t target = 1ull << precision;
  if (n > target) throw ConfigError("build_pmf_table: range exceeds 2^precision symbols");

  std::vector<double> p(n);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p[i] = std::max(pmf_fn(double(q_min + int64_t(i))), kPmfFloor);
    total += p[i];
  }

  PmfTable t;
  t.q_min = q_min;
  t.q_max = q_max;
  t.precision = precision;
  t.freq.resize(n);
  std::vector<double> remainder(n);
  uint64_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double ideal = p[i] / total * double(target);
    uint64_t f = static_cast<uint64_t>(std::floor(ideal));
    if (f < 1) f = 1;
    remainder[i] = ideal - std::floor(ideal);
    t.freq[i] = static_cast<uint32_t>(f);
    assigned += f;
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  if (assigned < target) {
    // Grant +1 to the largest remainders first.
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
    size_t k = 0;
    while (assigned < target) {
      t.freq[order[k % n]] += 1;
      ++assigned;
      ++k;
    }
  } else if (assigned > target) {
    // Reclaim from the smallest remainders, never dropping below 1.
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return remainder[a] < remainder[b]; });
    size_t k = 0;
    while (assigned > target) {
      uint32_t& f = t.freq[order[k % n]];
      if (f > 1) {
        f -= 1;
        --assigned;
      }
      ++k;
    }
  }
  t.rebuild_cum();
  return t;
}

}  // namespace shacira
