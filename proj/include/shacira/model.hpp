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
#include <span>
#include <string>
#include <vector>

#include "shacira/common.hpp"
#include "shacira/density.hpp"
#include "shacira/grid.hpp"
#include "shacira/quantizer.hpp"
#include "shacira/rng.hpp"
#include "shacira/tensor.hpp"

namespace shacira {

// Shared linear latent decoder: one D x F transform plus bias for all levels.
template <typename Real>
struct DecoderParams {
  Tensor<Real> weight;  // D x F
  Tensor<Real> bias;    // F
};

// Two ReLU hidden layers of equal width, linear output.
template <typename Real>
struct MlpParams {
  Tensor<Real> w1, b1;  // width x in, width
  Tensor<Real> w2, b2;  // width x width
  Tensor<Real> w3, b3;  // out x width
  int in = 0, width = 0, out = 0;
};

// How the forward pass maps proxies to quantized latents.
//   kHardSample:  Gumbel-perturbed argmax gate; surrogate gradient.
//   kSoftSample:  the relaxation itself in the forward value, so finite
//                 differences match the analytic gradient (test mode).
//   kDeterministic: nearest-even rounding with straight-through gradient.
enum class QuantMode { kHardSample, kSoftSample, kDeterministic };

template <typename Real>
struct ShaciraModel {
  GridConfig grid;
  std::vector<LevelLayout> layout;
  std::vector<Tensor<Real>> latents;  // per level: T_l x D proxies
  DecoderParams<Real> decoder;
  MlpParams<Real> mlp;
  std::vector<Tensor<Real>> density;  // per latent dim
  AnnealSchedule sched;

  bool train_mode = true;
  bool frozen = false;
  int active_levels = 0;  // LOD mask; levels >= this contribute zero features
  uint32_t image_w = 0, image_h = 0;
  uint8_t channels = 3;
  std::vector<PmfTable> tables;  // per latent dim, built at freeze

  int feature_total() const { return grid.levels * grid.feature_dim; }
};

// Retained intermediates for one batch.
template <typename Real>
struct ForwardContext {
  int64_t step = 0;
  QuantMode qmode = QuantMode::kDeterministic;
  std::vector<std::vector<Real>> q;   // per level: T_l * D quantized values
  std::vector<std::vector<Real>> dq;  // per level: dq/dqhat surrogate factors
  std::vector<std::vector<Real>> z;   // per level: T_l * F decoded features
  size_t n = 0;
  std::vector<Real> feat, h1, h2, y;
  bool valid = false;
};

namespace detail {

template <typename T>
void chunk_range(size_t n, int chunk, size_t* lo, size_t* hi) {
  *lo = n * size_t(chunk) / kGradChunks;
  *hi = n * size_t(chunk + 1) / kGradChunks;
  (void)sizeof(T);
}

}  // namespace detail

template <typename Real>
ShaciraModel<Real> make_model(const GridConfig& grid, int mlp_width, const AnnealSchedule& sched,
                              uint32_t image_w, uint32_t image_h) {
  grid.validate();
  if (mlp_width < 1) throw ConfigError("make_model: mlp width must be >= 1");
  ShaciraModel<Real> m;
  m.grid = grid;
  m.layout = level_layout(grid);
  m.sched = sched;
  m.active_levels = grid.levels;
  m.image_w = image_w;
  m.image_h = image_h;
  for (int l = 0; l < grid.levels; ++l) {
    m.latents.emplace_back("latents[" + std::to_string(l) + "]",
                           std::vector<size_t>{m.layout[l].rows, size_t(grid.latent_dim)});
  }
  m.decoder.weight = Tensor<Real>("decoder.weight",
                                  {size_t(grid.latent_dim), size_t(grid.feature_dim)});
  m.decoder.bias = Tensor<Real>("decoder.bias", {size_t(grid.feature_dim)});
  const int in = grid.levels * grid.feature_dim;
  m.mlp.in = in;
  m.mlp.width = mlp_width;
  m.mlp.out = 3;
  m.mlp.w1 = Tensor<Real>("mlp.w1", {size_t(mlp_width), size_t(in)});
  m.mlp.b1 = Tensor<Real>("mlp.b1", {size_t(mlp_width)});
  m.mlp.w2 = Tensor<Real>("mlp.w2", {size_t(mlp_width), size_t(mlp_width)});
  m.mlp.b2 = Tensor<Real>("mlp.b2", {size_t(mlp_width)});
  m.mlp.w3 = Tensor<Real>("mlp.w3", {size_t(m.mlp.out), size_t(mlp_width)});
  m.mlp.b3 = Tensor<Real>("mlp.b3", {size_t(m.mlp.out)});
  for (int dd = 0; dd < grid.latent_dim; ++dd) {
    m.density.emplace_back("density[" + std::to_string(dd) + "]",
                           std::vector<size_t>{size_t(density::kParamCount)});
  }
  return m;
}

// Quantizes every latent row for this step and decodes the feature tables.
template <typename Real>
void quantize_and_decode(const ShaciraModel<Real>& m, int64_t step, QuantMode qmode,
                         const SeededRng& rng, Exec exec, ForwardContext<Real>& ctx) {
  const int D = m.grid.latent_dim;
  const int F = m.grid.feature_dim;
  ctx.q.resize(m.latents.size());
  ctx.dq.resize(m.latents.size());
  ctx.z.resize(m.latents.size());
  double tau = 1.0;
  if (qmode != QuantMode::kDeterministic) {
    auto t = tau_at(m.sched, step);
    if (!t) {
      qmode = QuantMode::kDeterministic;
    } else {
      tau = *t;
    }
  }
  ctx.qmode = qmode;
  ctx.step = step;
  for (size_t l = 0; l < m.latents.size(); ++l) {
    const Tensor<Real>& lat = m.latents[l];
    const size_t rows = lat.rows();
    const size_t elems = rows * size_t(D);
    ctx.q[l].resize(elems);
    ctx.dq[l].resize(elems);
    ctx.z[l].resize(rows * size_t(F));
    const SeededRng gr = rng.substream("gumbel", l);
    const uint64_t base = uint64_t(step) * elems * 2;
    for (Real v : lat.values) {
      if (!std::isfinite(double(v)))
        throw NumericError("quantize: non-finite latent in level " + std::to_string(l));
    }

    const bool par = exec == Exec::kParallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t c = 0; c < kGradChunks; ++c) {
      size_t lo, hi;
      detail::chunk_range<Real>(rows, int(c), &lo, &hi);
      for (size_t i = lo; i < hi; ++i) {
        for (int dd = 0; dd < D; ++dd) {
          const size_t e = i * D + dd;
          const Real qh = lat.values[e];
          if (qmode == QuantMode::kDeterministic) {
            ctx.q[l][e] = round_deterministic(qh);
            ctx.dq[l][e] = Real(1);  // straight-through
          } else {
            const QuantSample<Real> s = sample_quantized(
                qh, Real(tau), gr.gumbel_at(base + 2 * e), gr.gumbel_at(base + 2 * e + 1));
            ctx.q[l][e] = qmode == QuantMode::kSoftSample ? s.soft : s.hard;
            ctx.dq[l][e] = s.dsoft;
          }
        }
        // Z row = decoder(Q row)
        Real* zrow = ctx.z[l].data() + i * F;
        for (int f = 0; f < F; ++f) zrow[f] = m.decoder.bias.values[f];
        for (int dd = 0; dd < D; ++dd) {
          const Real qv = ctx.q[l][i * D + dd];
          for (int f = 0; f < F; ++f) zrow[f] += qv * m.decoder.weight.values[dd * F + f];
        }
      }
    }
  }
}

// Eqs-6..8 path for a batch of normalized coordinates (row-major n x d).
// Returns predictions in ctx.y (n x 3, linear output).
template <typename Real>
void forward(const ShaciraModel<Real>& m, std::span<const Real> coords, int64_t step,
             const SeededRng& rng, Exec exec, ForwardContext<Real>& ctx) {
  const int d = m.grid.d;
  const size_t n = coords.size() / size_t(d);
  const QuantMode qmode = (m.train_mode && !m.frozen)
                              ? (ctx.qmode == QuantMode::kSoftSample ? QuantMode::kSoftSample
                                                                     : QuantMode::kHardSample)
                              : QuantMode::kDeterministic;
  quantize_and_decode(m, step, qmode, rng, exec, ctx);

  const int L = m.grid.levels;
  const int F = m.grid.feature_dim;
  const int in = m.mlp.in;
  const int W = m.mlp.width;
  const int out = m.mlp.out;
  ctx.n = n;
  ctx.feat.resize(n * size_t(in));
  ctx.h1.resize(n * size_t(W));
  ctx.h2.resize(n * size_t(W));
  ctx.y.resize(n * size_t(out));

  const bool par = exec == Exec::kParallel;
  std::vector<char> badc(kGradChunks, 0);
#pragma omp parallel for schedule(static) if (par)
  for (int64_t c = 0; c < kGradChunks; ++c) {
    size_t lo, hi;
    detail::chunk_range<Real>(n, int(c), &lo, &hi);
    for (size_t i = lo; i < hi; ++i) {
      const Real* x = coords.data() + i * d;
      Real* feat = ctx.feat.data() + i * in;
      for (int l = 0; l < L; ++l) {
        Real* fl = feat + l * F;
        if (l >= m.active_levels) {
          for (int f = 0; f < F; ++f) fl[f] = Real(0);
          continue;
        }
        const CornerSet cs = gather_corners(std::span<const Real>(x, size_t(d)), m.layout[l], d);
        for (int f = 0; f < F; ++f) fl[f] = Real(0);
        for (int cc = 0; cc < cs.count; ++cc) {
          const Real* zrow = ctx.z[l].data() + size_t(cs.index[cc]) * F;
          const Real w = Real(cs.weight[cc]);
          for (int f = 0; f < F; ++f) fl[f] += w * zrow[f];
        }
      }
      Real* h1 = ctx.h1.data() + i * W;
      for (int j = 0; j < W; ++j) {
        Real acc = m.mlp.b1.values[j];
        const Real* wr = m.mlp.w1.values.data() + size_t(j) * in;
        for (int k = 0; k < in; ++k) acc += wr[k] * feat[k];
        h1[j] = acc > Real(0) ? acc : Real(0);
      }
      Real* h2 = ctx.h2.data() + i * W;
      for (int j = 0; j < W; ++j) {
        Real acc = m.mlp.b2.values[j];
        const Real* wr = m.mlp.w2.values.data() + size_t(j) * W;
        for (int k = 0; k < W; ++k) acc += wr[k] * h1[k];
        h2[j] = acc > Real(0) ? acc : Real(0);
      }
      Real* y = ctx.y.data() + i * out;
      for (int j = 0; j < out; ++j) {
        Real acc = m.mlp.b3.values[j];
        const Real* wr = m.mlp.w3.values.data() + size_t(j) * W;
        for (int k = 0; k < W; ++k) acc += wr[k] * h2[k];
        y[j] = acc;
        if (!std::isfinite(double(acc))) badc[c] = 1;
      }
    }
  }
  bool bad = false;
  for (char b : badc) bad = bad || b != 0;
  if (bad) {
    // Locate the first offending coordinate for the error message.
    for (size_t i = 0; i < n; ++i) {
      auto finite = [](std::span<const Real> s) {
        for (Real v : s)
          if (!std::isfinite(double(v))) return false;
        return true;
      };
      std::span<const Real> fi(ctx.feat.data() + i * in, size_t(in));
      std::span<const Real> a1(ctx.h1.data() + i * W, size_t(W));
      std::span<const Real> a2(ctx.h2.data() + i * W, size_t(W));
      std::span<const Real> yy(ctx.y.data() + i * out, size_t(out));
      if (!finite(fi)) throw NumericError("forward: non-finite at stage interpolation");
      if (!finite(a1)) throw NumericError("forward: non-finite at stage hidden1");
      if (!finite(a2)) throw NumericError("forward: non-finite at stage hidden2");
      if (!finite(yy)) throw NumericError("forward: non-finite at stage output");
    }
  }
  ctx.valid = true;
}

// MSE over batch and channels; prediction left unclamped.
template <typename Real>
Real mse_loss(std::span<const Real> pred, std::span<const Real> target) {
  if (pred.size() != target.size()) throw ConfigError("mse_loss: size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double e = double(pred[i]) - double(target[i]);
    acc += e * e;
  }
  return Real(pred.empty() ? 0.0 : acc / double(pred.size()));
}

// Distortion-path backpropagation: exact chain rule from the batch MSE back
// to the MLP, decoder, and latent proxies (through the quantizer surrogate).
// Accumulates into each tensor's grad.
template <typename Real>
void backward(ShaciraModel<Real>& m, const ForwardContext<Real>& ctx, std::span<const Real> coords,
              std::span<const Real> target, Exec exec) {
  if (!ctx.valid) throw ConfigError("backward: forward context not populated");
  const int d = m.grid.d;
  const int L = m.grid.levels;
  const int F = m.grid.feature_dim;
  const int D = m.grid.latent_dim;
  const int in = m.mlp.in;
  const int W = m.mlp.width;
  const int out = m.mlp.out;
  const size_t n = ctx.n;
  const double inv = n == 0 ? 0.0 : 1.0 / (double(n) * out);

  // Chunk-local accumulators, merged in fixed chunk order.
  const size_t mlp_sz = size_t(W) * in + W + size_t(W) * W + W + size_t(out) * W + out;
  std::vector<Real> gmlp(mlp_sz * kGradChunks, Real(0));
  std::vector<std::vector<Real>> gz(L);
  for (int l = 0; l < L; ++l) gz[l].assign(size_t(m.layout[l].rows) * F * kGradChunks, Real(0));

  const bool par = exec == Exec::kParallel;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t c = 0; c < kGradChunks; ++c) {
    size_t lo, hi;
    detail::chunk_range<Real>(n, int(c), &lo, &hi);
    Real* gw1 = gmlp.data() + mlp_sz * c;
    Real* gb1 = gw1 + size_t(W) * in;
    Real* gw2 = gb1 + W;
    Real* gb2 = gw2 + size_t(W) * W;
    Real* gw3 = gb2 + W;
    Real* gb3 = gw3 + size_t(out) * W;
    std::vector<Real> dy(out), dh2(W), dh1(W), dfeat(in);
    for (size_t i = lo; i < hi; ++i) {
      const Real* h1 = ctx.h1.data() + i * W;
      const Real* h2 = ctx.h2.data() + i * W;
      const Real* feat = ctx.feat.data() + i * in;
      for (int j = 0; j < out; ++j)
        dy[j] = Real(2.0 * inv) * (ctx.y[i * out + j] - target[i * out + j]);
      for (int k = 0; k < W; ++k) dh2[k] = Real(0);
      for (int j = 0; j < out; ++j) {
        const Real* wr = m.mlp.w3.values.data() + size_t(j) * W;
        gb3[j] += dy[j];
        for (int k = 0; k < W; ++k) {
          gw3[size_t(j) * W + k] += dy[j] * h2[k];
          dh2[k] += wr[k] * dy[j];
        }
      }
      for (int k = 0; k < W; ++k) {
        if (!(h2[k] > Real(0))) dh2[k] = Real(0);
        dh1[k] = Real(0);
      }
      for (int j = 0; j < W; ++j) {
        if (dh2[j] == Real(0)) continue;
        const Real* wr = m.mlp.w2.values.data() + size_t(j) * W;
        gb2[j] += dh2[j];
        for (int k = 0; k < W; ++k) {
          gw2[size_t(j) * W + k] += dh2[j] * h1[k];
          dh1[k] += wr[k] * dh2[j];
        }
      }
      for (int k = 0; k < W; ++k) {
        if (!(h1[k] > Real(0))) dh1[k] = Real(0);
      }
      for (int k = 0; k < in; ++k) dfeat[k] = Real(0);
      for (int j = 0; j < W; ++j) {
        if (dh1[j] == Real(0)) continue;
        const Real* wr = m.mlp.w1.values.data() + size_t(j) * in;
        gb1[j] += dh1[j];
        for (int k = 0; k < in; ++k) {
          gw1[size_t(j) * in + k] += dh1[j] * feat[k];
          dfeat[k] += wr[k] * dh1[j];
        }
      }
      const Real* x = coords.data() + i * d;
      for (int l = 0; l < m.active_levels; ++l) {
        const CornerSet cs = gather_corners(std::span<const Real>(x, size_t(d)), m.layout[l], d);
        Real* gzl = gz[l].data() + size_t(m.layout[l].rows) * F * c;
        for (int cc = 0; cc < cs.count; ++cc) {
          Real* row = gzl + size_t(cs.index[cc]) * F;
          const Real w = Real(cs.weight[cc]);
          for (int f = 0; f < F; ++f) row[f] += w * dfeat[l * F + f];
        }
      }
    }
  }

  // Merge MLP chunk accumulators in chunk order.
  Real* dst[6] = {m.mlp.w1.grad.data(), m.mlp.b1.grad.data(), m.mlp.w2.grad.data(),
                  m.mlp.b2.grad.data(), m.mlp.w3.grad.data(), m.mlp.b3.grad.data()};
  const size_t seg[6] = {size_t(W) * in, size_t(W), size_t(W) * W, size_t(W), size_t(out) * W,
                         size_t(out)};
  for (int c = 0; c < kGradChunks; ++c) {
    const Real* src = gmlp.data() + mlp_sz * c;
    for (int s = 0; s < 6; ++s) {
      for (size_t k = 0; k < seg[s]; ++k) dst[s][k] += src[k];
      src += seg[s];
    }
  }

  // Feature-table gradients -> decoder and latent-proxy gradients.
  for (int l = 0; l < L; ++l) {
    const size_t rows = m.layout[l].rows;
    const size_t stride = rows * F;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t c = 0; c < kGradChunks; ++c) {
      size_t lo, hi;
      detail::chunk_range<Real>(rows, int(c), &lo, &hi);
      for (size_t i = lo; i < hi; ++i) {
        Real dz[8];  // F is small in practice; fall back below if not
        Real* dzp = dz;
        std::vector<Real> dzv;
        if (F > 8) {
          dzv.resize(F);
          dzp = dzv.data();
        }
        for (int f = 0; f < F; ++f) {
          Real acc = Real(0);
          for (int cc = 0; cc < kGradChunks; ++cc) acc += gz[l][stride * cc + i * F + f];
          dzp[f] = acc;
        }
        for (int dd = 0; dd < D; ++dd) {
          Real dq = Real(0);
          for (int f = 0; f < F; ++f) dq += dzp[f] * m.decoder.weight.values[dd * F + f];
          m.latents[l].grad[i * D + dd] += dq * ctx.dq[l][i * D + dd];
        }
      }
    }
    // Decoder gradients accumulate over rows in fixed order (serial; cheap).
    for (size_t i = 0; i < rows; ++i) {
      for (int f = 0; f < F; ++f) {
        Real acc = Real(0);
        for (int cc = 0; cc < kGradChunks; ++cc) acc += gz[l][stride * cc + i * F + f];
        if (acc == Real(0)) continue;
        m.decoder.bias.grad[f] += acc;
        for (int dd = 0; dd < D; ++dd)
          m.decoder.weight.grad[dd * F + f] += ctx.q[l][i * D + dd] * acc;
      }
    }
  }
}

// Entropy regularization: per-level self-information of noise-perturbed
// proxies in bits per row, summed over levels. When grad_scale > 0 the
// lambda-scaled gradients flow into the proxies and density models.
template <typename Real>
struct RateLoss {
  double total_bits_per_row = 0.0;          // sum over levels of L_I,l
  std::vector<double> per_level;            // L_I,l
  double total_bits = 0.0;                  // sum over levels of T_l * L_I,l
};

template <typename Real>
RateLoss<Real> rate_loss(ShaciraModel<Real>& m, int64_t step, const SeededRng& rng,
                         double grad_scale, Exec exec) {
  const int D = m.grid.latent_dim;
  RateLoss<Real> out;
  out.per_level.resize(m.latents.size(), 0.0);
  const bool par = exec == Exec::kParallel;
  const size_t pc = density::kParamCount;
  for (size_t l = 0; l < m.latents.size(); ++l) {
    Tensor<Real>& lat = m.latents[l];
    const size_t rows = lat.rows();
    const SeededRng nr = rng.substream("rate_noise", l);
    const uint64_t base = uint64_t(step) * rows * D;
    const double upstream = grad_scale / double(rows);

    std::vector<double> bits(kGradChunks, 0.0);
    std::vector<Real> gdens(grad_scale != 0.0 ? pc * D * kGradChunks : 0, Real(0));
#pragma omp parallel for schedule(static) if (par)
    for (int64_t c = 0; c < kGradChunks; ++c) {
      size_t lo, hi;
      detail::chunk_range<Real>(rows, int(c), &lo, &hi);
      for (size_t i = lo; i < hi; ++i) {
        for (int dd = 0; dd < D; ++dd) {
          const size_t e = i * D + dd;
          const double noise = nr.uniform_at(base + e) - 0.5;
          const double x = double(lat.values[e]) + noise;
          std::span<const Real> params(m.density[dd].values);
          if (grad_scale != 0.0) {
            double dx = 0.0;
            std::span<Real> gp(gdens.data() + (size_t(c) * D + dd) * pc, pc);
            bits[c] += info_loss_element(params, x, upstream, &dx, gp);
            lat.grad[e] += Real(dx);
          } else {
            bits[c] += info_loss_element(params, x, 0.0, nullptr, std::span<Real>());
          }
        }
      }
    }
    double level_bits = 0.0;
    for (int c = 0; c < kGradChunks; ++c) level_bits += bits[c];
    if (grad_scale != 0.0) {
      for (int c = 0; c < kGradChunks; ++c) {
        for (int dd = 0; dd < D; ++dd) {
          const Real* src = gdens.data() + (size_t(c) * D + dd) * pc;
          for (size_t k = 0; k < pc; ++k) m.density[dd].grad[k] += src[k];
        }
      }
    }
    out.per_level[l] = level_bits / double(rows);
    out.total_bits_per_row += out.per_level[l];
    out.total_bits += level_bits;
  }
  return out;
}

// Replaces proxies by their deterministic rounding, builds the per-dimension
// coder tables from the density models over the observed symbol range, and
// switches to eval mode.
template <typename Real>
void freeze(ShaciraModel<Real>& m) {
  const int D = m.grid.latent_dim;
  std::vector<int32_t> q_min(D, 0), q_max(D, 0);
  bool first = true;
  for (auto& lat : m.latents) {
    for (size_t e = 0; e < lat.size(); ++e) {
      lat.values[e] = round_deterministic(lat.values[e]);
    }
    for (size_t i = 0; i < lat.rows(); ++i) {
      for (int dd = 0; dd < D; ++dd) {
        const int32_t q = int32_t(lat.values[i * D + dd]);
        if (first) {
          q_min[dd] = q_max[dd] = q;
        } else {
          q_min[dd] = std::min(q_min[dd], q);
          q_max[dd] = std::max(q_max[dd], q);
        }
      }
      first = false;
    }
  }
  m.tables.clear();
  for (int dd = 0; dd < D; ++dd) {
    std::span<const Real> params(m.density[dd].values);
    m.tables.push_back(build_pmf_table([&](double q) { return pmf(params, q); }, q_min[dd],
                                       q_max[dd]));
  }
  m.train_mode = false;
  m.frozen = true;
}

}  // namespace shacira
