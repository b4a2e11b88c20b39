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

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>

#include "shacira/common.hpp"
#include "shacira/rng.hpp"

namespace shacira {

// Latents are clamped into this range each optimizer step so the coder
// alphabet fits in 16 bits. Trained values stay within a few dozen.
inline constexpr double kLatentMin = -32768.0;
inline constexpr double kLatentMax = 32767.0;

// Fractional parts are clamped away from {0, 1} before arctanh.
inline constexpr double kFracEps = 1e-6;

struct AnnealSchedule {
  double tau0 = 1.0;
  double tau_min = 1e-3;
  double anneal_fraction = 0.95;
  int64_t total_steps = 0;

  int64_t anneal_steps() const {
    return static_cast<int64_t>(anneal_fraction * double(total_steps));
  }
};

// Exponential decay from tau0 to tau_min over the anneal window; afterwards
// the quantizer switches to deterministic rounding (returned as nullopt).
inline std::optional<double> tau_at(const AnnealSchedule& s, int64_t step) {
  const int64_t n = s.anneal_steps();
  if (step >= n || n <= 0) return std::nullopt;
  return s.tau0 * std::pow(s.tau_min / s.tau0, double(step) / double(n));
}

// Probability of (round-down, round-up) for the soft rounding gate. Index 0
// is round-down. Depends only on the fractional part of qhat.
template <typename Real>
std::pair<Real, Real> gate_probs(Real qhat, Real tau) {
  if (!(tau > Real(0))) throw ConfigError("gate_probs: tau must be positive");
  double r = double(qhat) - std::floor(double(qhat));
  r = std::min(std::max(r, kFracEps), 1.0 - kFracEps);
  const double l0 = -std::atanh(r) / double(tau);
  const double l1 = -std::atanh(1.0 - r) / double(tau);
  const double m = std::max(l0, l1);
  const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
  return {Real(e0 / (e0 + e1)), Real(e1 / (e0 + e1))};
}

// Nearest integer, ties round half-to-even. Backward contract is identity
// (straight-through).
template <typename Real>
Real round_deterministic(Real x) {
  const double v = double(x);
  const double fl = std::floor(v);
  const double frac = v - fl;
  if (frac > 0.5) return Real(fl + 1.0);
  if (frac < 0.5) return Real(fl);
  return Real(std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0);
}

// One stochastically rounded element. `hard` is the emitted integer value;
// `soft` is the Gumbel-softmax relaxation p0*floor + p1*ceil whose derivative
// w.r.t. qhat (`dsoft`) is the surrogate gradient used in training.
template <typename Real>
struct QuantSample {
  Real hard;
  Real soft;
  Real dsoft;
};

template <typename Real>
QuantSample<Real> sample_quantized(Real qhat, Real tau, double g_down, double g_up) {
  if (!std::isfinite(double(qhat))) throw NumericError("sample_quantized: non-finite latent");
  if (!(tau > Real(0))) throw ConfigError("sample_quantized: tau must be positive");
  const double v = double(qhat);
  const double fl = std::floor(v);
  const double ce = std::ceil(v);

  const double r_raw = v - fl;
  const bool clamped = r_raw < kFracEps || r_raw > 1.0 - kFracEps;
  const double r = std::min(std::max(r_raw, kFracEps), 1.0 - kFracEps);
  // Perturbed logits; the down/up logits already carry the 1/tau scale.
  const double a0 = -std::atanh(r) / double(tau) + g_down;
  const double a1 = -std::atanh(1.0 - r) / double(tau) + g_up;
  const double m = std::max(a0, a1);
  const double e0 = std::exp(a0 - m), e1 = std::exp(a1 - m);
  const double s1 = e1 / (e0 + e1);
  const double s0 = 1.0 - s1;

  QuantSample<Real> out;
  out.hard = Real(a1 > a0 ? ce : fl);
  out.soft = Real(fl + s1 * (ce - fl));
  // d(soft)/dqhat = s0*s1 * d(a1 - a0)/dqhat, zero where the clamp is active.
  double da = 0.0;
  if (!clamped) {
    da = (1.0 / (1.0 - (1.0 - r) * (1.0 - r)) + 1.0 / (1.0 - r * r)) / double(tau);
  }
  out.dsoft = Real(s0 * s1 * da * (ce - fl));
  return out;
}

}  // namespace shacira
