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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "shacira/bitstream.hpp"
#include "shacira/image.hpp"
#include "shacira/model.hpp"

namespace shacira {

struct TrainConfig {
  int64_t steps = 20000;
  double lambda_i = 1e-4;
  double lr_mlp = 1e-3;
  double lr_latents = 1e-2;
  double lr_decoder = 1e-2;
  double lr_density = 1e-4;
  int64_t batch = 0;  // coordinates per step; 0 = full grid
  double anneal_fraction = 0.95;
  uint64_t seed = 0;
  int mlp_width = 16;
  int64_t log_every = 250;

  void validate() const {
    if (steps < 1) throw ConfigError("TrainConfig: steps must be >= 1");
    if (lambda_i < 0) throw ConfigError("TrainConfig: lambda_i must be >= 0");
    if (batch < 0) throw ConfigError("TrainConfig: batch must be >= 0");
    if (anneal_fraction < 0 || anneal_fraction > 1)
      throw ConfigError("TrainConfig: anneal_fraction must be in [0,1]");
  }
};

struct MetricsSample {
  int64_t step = 0;
  double mse = 0.0;
  double li_bits_per_row = 0.0;  // sum over levels of L_I,l
  double est_bpp = 0.0;
  double tau = 0.0;  // 0 once deterministic
  double seconds = 0.0;
};

using MetricsTrace = std::vector<MetricsSample>;

template <typename Real>
struct OptimizerStates {
  std::vector<AdamState<Real>> latents;
  AdamState<Real> dec_w, dec_b;
  AdamState<Real> w1, b1, w2, b2, w3, b3;
  std::vector<AdamState<Real>> density;
};

template <typename Real>
struct TrainResult {
  ShaciraModel<Real> model;
  MetricsTrace trace;
  double est_payload_bits = 0.0;  // upper-bound estimate of the coded payload
  double seconds = 0.0;
};

// Raw (uncompressed) parameter bytes that the bitstream will carry; used for
// the bits-per-pixel estimate in the trace.
template <typename Real>
size_t raw_param_bytes(const ShaciraModel<Real>& m) {
  size_t floats = m.decoder.weight.size() + m.decoder.bias.size() + m.mlp.w1.size() +
                  m.mlp.b1.size() + m.mlp.w2.size() + m.mlp.b2.size() + m.mlp.w3.size() +
                  m.mlp.b3.size();
  for (const auto& t : m.density) floats += t.size();
  return floats * 4;
}

template <typename Real>
ShaciraModel<Real> init_params(const TrainConfig& cfg, const GridConfig& grid, uint32_t image_w,
                               uint32_t image_h) {
  AnnealSchedule sched;
  sched.anneal_fraction = cfg.anneal_fraction;
  sched.total_steps = cfg.steps;
  ShaciraModel<Real> m = make_model<Real>(grid, cfg.mlp_width, sched, image_w, image_h);
  const SeededRng root(cfg.seed);

  for (size_t l = 0; l < m.latents.size(); ++l) {
    const SeededRng r = root.substream("init_latents", l);
    for (size_t e = 0; e < m.latents[l].size(); ++e)
      m.latents[l].values[e] = Real(0.02 * r.uniform_at(e) - 0.01);  // U(-0.01, 0.01)
  }
  {
    const SeededRng r = root.substream("init_decoder");
    for (size_t e = 0; e < m.decoder.weight.size(); ++e) {
      // Box-Muller; N(0, 0.1) means stddev 0.1 here.
      const double u1 = r.uniform_open_at(2 * e);
      const double u2 = r.uniform_at(2 * e + 1);
      m.decoder.weight.values[e] =
          Real(0.1 * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2));
    }
  }
  auto xavier = [&root](Tensor<Real>& t, size_t fan_in, size_t fan_out, uint64_t idx) {
    const SeededRng r = root.substream("init_mlp", idx);
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    for (size_t e = 0; e < t.size(); ++e)
      t.values[e] = Real(limit * (2.0 * r.uniform_at(e) - 1.0));
  };
  xavier(m.mlp.w1, m.mlp.in, m.mlp.width, 0);
  xavier(m.mlp.w2, m.mlp.width, m.mlp.width, 1);
  xavier(m.mlp.w3, m.mlp.width, m.mlp.out, 2);
  for (int dd = 0; dd < grid.latent_dim; ++dd) {
    density::init_params<Real>(m.density[dd].values, root.substream("init_density", dd));
  }
  return m;
}

// Coordinate/target batch. Full-grid mode enumerates pixels row-major;
// otherwise samples without replacement within the step. Pixel (i,j) of an
// HxW image maps to ((j+0.5)/W, (i+0.5)/H).
template <typename Real>
void sample_batch(const ImageBuffer& img, int64_t batch, SeededRng rng, std::vector<Real>& coords,
                  std::vector<Real>& targets) {
  const size_t pixels = img.pixel_count();
  const bool full = batch == 0 || size_t(batch) >= pixels;
  const size_t n = full ? pixels : size_t(batch);
  coords.resize(n * 2);
  targets.resize(n * 3);
  std::vector<uint32_t> idx;
  if (!full) {
    idx.resize(pixels);
    std::iota(idx.begin(), idx.end(), 0u);
    for (size_t k = 0; k < n; ++k) {
      const size_t j = k + size_t(rng.next_below(pixels - k));
      std::swap(idx[k], idx[j]);
    }
  }
  for (size_t k = 0; k < n; ++k) {
    const size_t p = full ? k : idx[k];
    const uint32_t row = uint32_t(p / img.width);
    const uint32_t col = uint32_t(p % img.width);
    coords[k * 2 + 0] = Real((col + 0.5) / img.width);
    coords[k * 2 + 1] = Real((row + 0.5) / img.height);
    for (int c = 0; c < 3; ++c) targets[k * 3 + c] = Real(img.at(row, col, c));
  }
}

namespace detail {

template <typename Real>
OptimizerStates<Real> make_states(const ShaciraModel<Real>& m) {
  OptimizerStates<Real> s;
  for (const auto& lat : m.latents) s.latents.emplace_back(lat.size());
  s.dec_w = AdamState<Real>(m.decoder.weight.size());
  s.dec_b = AdamState<Real>(m.decoder.bias.size());
  s.w1 = AdamState<Real>(m.mlp.w1.size());
  s.b1 = AdamState<Real>(m.mlp.b1.size());
  s.w2 = AdamState<Real>(m.mlp.w2.size());
  s.b2 = AdamState<Real>(m.mlp.b2.size());
  s.w3 = AdamState<Real>(m.mlp.w3.size());
  s.b3 = AdamState<Real>(m.mlp.b3.size());
  for (const auto& t : m.density) s.density.emplace_back(t.size());
  return s;
}

// Zero learning rate leaves the group untouched (and clears its gradient).
template <typename Real>
void step_group(Tensor<Real>& t, AdamState<Real>& s, double lr) {
  if (lr > 0) {
    adam_step(t, s, Real(lr));
  } else {
    t.zero_grad();
  }
}

}  // namespace detail

template <typename Real>
TrainResult<Real> train(const ImageBuffer& img, const TrainConfig& cfg, const GridConfig& grid,
                        Exec exec = Exec::kParallel) {
  cfg.validate();
  grid.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  TrainResult<Real> res;
  res.model = init_params<Real>(cfg, grid, img.width, img.height);
  ShaciraModel<Real>& m = res.model;
  OptimizerStates<Real> states = detail::make_states(m);
  const SeededRng root(cfg.seed);
  const SeededRng train_rng = root.substream("train");

  std::vector<Real> coords, targets;
  ForwardContext<Real> ctx;
  const size_t raw_bytes = raw_param_bytes(m);
  RateLoss<Real> rate;

  for (int64_t step = 0; step < cfg.steps; ++step) {
    if (cfg.batch == 0) {
      if (coords.empty()) sample_batch<Real>(img, 0, train_rng, coords, targets);
    } else {
      sample_batch<Real>(img, cfg.batch, train_rng.substream("batch", uint64_t(step)), coords,
                         targets);
    }

    ctx.qmode = QuantMode::kHardSample;
    forward(m, std::span<const Real>(coords), step, train_rng, exec, ctx);
    const double mse = double(mse_loss<Real>(ctx.y, targets));
    rate = rate_loss(m, step, train_rng, cfg.lambda_i, exec);
    const double total = mse + cfg.lambda_i * rate.total_bits_per_row;
    if (!std::isfinite(total)) {
      res.trace.push_back({step, mse, rate.total_bits_per_row, 0.0, 0.0, elapsed()});
      throw DivergenceError("train: non-finite loss at step " + std::to_string(step));
    }
    backward(m, ctx, std::span<const Real>(coords), std::span<const Real>(targets), exec);

    for (size_t l = 0; l < m.latents.size(); ++l)
      detail::step_group(m.latents[l], states.latents[l], cfg.lr_latents);
    detail::step_group(m.decoder.weight, states.dec_w, cfg.lr_decoder);
    detail::step_group(m.decoder.bias, states.dec_b, cfg.lr_decoder);
    detail::step_group(m.mlp.w1, states.w1, cfg.lr_mlp);
    detail::step_group(m.mlp.b1, states.b1, cfg.lr_mlp);
    detail::step_group(m.mlp.w2, states.w2, cfg.lr_mlp);
    detail::step_group(m.mlp.b2, states.b2, cfg.lr_mlp);
    detail::step_group(m.mlp.w3, states.w3, cfg.lr_mlp);
    detail::step_group(m.mlp.b3, states.b3, cfg.lr_mlp);
    for (int dd = 0; dd < grid.latent_dim; ++dd)
      detail::step_group(m.density[dd], states.density[dd], cfg.lr_density);

    for (auto& lat : m.latents) {
      for (Real& v : lat.values)
        v = Real(std::clamp(double(v), kLatentMin, kLatentMax));
    }

    if (step % cfg.log_every == 0 || step == cfg.steps - 1) {
      MetricsSample s;
      s.step = step;
      s.mse = mse;
      s.li_bits_per_row = rate.total_bits_per_row;
      s.est_bpp = (rate.total_bits + 8.0 * double(raw_bytes)) / double(img.pixel_count());
      s.tau = tau_at(m.sched, step).value_or(0.0);
      s.seconds = elapsed();
      res.trace.push_back(s);
    }
  }

  freeze(m);
  // Final rate estimate: ideal code length of the frozen integers under the
  // coder tables built from the learned densities, plus the per-stream range
  // coder slack (8 flush bytes and 1/4096 byte per symbol). This bounds the
  // actual payload from above while tracking it within a few percent.
  res.est_payload_bits = 0.0;
  for (size_t l = 0; l < m.latents.size(); ++l) {
    const Tensor<Real>& lat = m.latents[l];
    for (size_t i = 0; i < lat.rows(); ++i) {
      for (int dd = 0; dd < grid.latent_dim; ++dd) {
        const PmfTable& t = m.tables[size_t(dd)];
        const int32_t q = int32_t(lat.values[i * grid.latent_dim + dd]);
        const double p = double(t.freq[size_t(q - t.q_min)]) / double(t.total());
        res.est_payload_bits += -std::log2(p);
      }
    }
    res.est_payload_bits += 64.0 + double(lat.size()) / 512.0;
  }
  res.seconds = elapsed();
  return res;
}

struct EvalResult {
  double psnr_db = 0.0;
  double bpp = 0.0;
  size_t bytes = 0;
  std::vector<double> per_lod_psnr;  // index l-1 -> PSNR through level l
};

template <typename Real>
double psnr_against(const ShaciraModel<Real>& m, const ImageBuffer& img, int lod, Exec exec) {
  std::vector<Real> coords, targets;
  sample_batch<Real>(img, 0, SeededRng(0), coords, targets);
  ShaciraModel<Real>& mm = const_cast<ShaciraModel<Real>&>(m);
  const int saved = mm.active_levels;
  mm.active_levels = lod;
  ForwardContext<Real> ctx;
  forward(mm, std::span<const Real>(coords), 0, SeededRng(0), exec, ctx);
  mm.active_levels = saved;
  double acc = 0.0;
  for (size_t i = 0; i < ctx.y.size(); ++i) {
    const double p = std::clamp(double(ctx.y[i]), 0.0, 1.0);
    const double e = p - double(targets[i]);
    acc += e * e;
  }
  const double mse = acc / double(ctx.y.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, -10.0 * std::log10(mse));
}

template <typename Real>
EvalResult evaluate(const ShaciraModel<Real>& m, const ImageBuffer& img,
                    Exec exec = Exec::kParallel) {
  if (!m.frozen) throw ConfigError("evaluate: model must be frozen");
  EvalResult r;
  r.bytes = serialize_model(m).size();
  r.bpp = 8.0 * double(r.bytes) / double(img.pixel_count());
  r.psnr_db = psnr_against(m, img, m.grid.levels, exec);
  for (int l = 1; l <= m.grid.levels; ++l) r.per_lod_psnr.push_back(psnr_against(m, img, l, exec));
  return r;
}

// Deterministic full-grid reconstruction of a frozen model.
template <typename Real>
ImageBuffer reconstruct(const ShaciraModel<Real>& m, Exec exec = Exec::kParallel) {
  if (m.image_w == 0 || m.image_h == 0) throw ConfigError("reconstruct: model has no image size");
  ImageBuffer img;
  img.width = m.image_w;
  img.height = m.image_h;
  img.pixels.assign(img.pixel_count() * 3, 0.0f);
  std::vector<Real> coords(img.pixel_count() * 2);
  for (uint32_t row = 0; row < img.height; ++row) {
    for (uint32_t col = 0; col < img.width; ++col) {
      const size_t k = size_t(row) * img.width + col;
      coords[k * 2 + 0] = Real((col + 0.5) / img.width);
      coords[k * 2 + 1] = Real((row + 0.5) / img.height);
    }
  }
  ForwardContext<Real> ctx;
  forward(const_cast<ShaciraModel<Real>&>(m), std::span<const Real>(coords), 0, SeededRng(0), exec,
          ctx);
  for (size_t i = 0; i < ctx.y.size(); ++i)
    img.pixels[i] = float(std::clamp(double(ctx.y[i]), 0.0, 1.0));
  return img;
}

}  // namespace shacira
