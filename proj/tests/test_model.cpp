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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "shacira/model.hpp"
#include "shacira/trainer.hpp"

using namespace shacira;

namespace {

// The full-model gradient check configuration: d=2, L=2, T=64, F=2, D=1, W=8.
GridConfig check_grid() {
  GridConfig g;
  g.d = 2;
  g.levels = 2;
  g.r_min = 4;
  g.r_max = 8;
  g.table_size = 64;
  g.feature_dim = 2;
  g.latent_dim = 1;
  return g;
}

template <typename Real>
ShaciraModel<Real> random_model(const GridConfig& g, int width, uint64_t seed, int64_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.mlp_width = width;
  auto m = init_params<Real>(cfg, g, 32, 32);
  // Scale latents up so quantization gates see non-trivial fractions.
  const SeededRng r(seed + 1);
  for (auto& lat : m.latents)
    for (size_t e = 0; e < lat.size(); ++e)
      lat.values[e] = Real(6.0 * r.uniform_at(e) - 3.0);
  return m;
}

std::vector<double> random_coords(size_t n, uint64_t seed) {
  const SeededRng r(seed);
  std::vector<double> x(2 * n);
  for (size_t i = 0; i < x.size(); ++i) x[i] = r.uniform_at(i);
  return x;
}

// Flattened view of every differentiable parameter group.
struct ParamView {
  std::vector<Tensor<double>*> tensors;

  explicit ParamView(ShaciraModel<double>& m, bool with_density) {
    for (auto& lat : m.latents) tensors.push_back(&lat);
    tensors.push_back(&m.decoder.weight);
    tensors.push_back(&m.decoder.bias);
    tensors.push_back(&m.mlp.w1);
    tensors.push_back(&m.mlp.b1);
    tensors.push_back(&m.mlp.w2);
    tensors.push_back(&m.mlp.b2);
    tensors.push_back(&m.mlp.w3);
    tensors.push_back(&m.mlp.b3);
    if (with_density)
      for (auto& d : m.density) tensors.push_back(&d);
  }
  std::vector<double> values() const {
    std::vector<double> v;
    for (auto* t : tensors) v.insert(v.end(), t->values.begin(), t->values.end());
    return v;
  }
  void set_values(std::span<const double> v) {
    size_t off = 0;
    for (auto* t : tensors) {
      std::copy(v.begin() + off, v.begin() + off + t->size(), t->values.begin());
      off += t->size();
    }
  }
  std::vector<double> grads() const {
    std::vector<double> g;
    for (auto* t : tensors) g.insert(g.end(), t->grad.begin(), t->grad.end());
    return g;
  }
  void zero_grads() {
    for (auto* t : tensors) t->zero_grad();
  }
};

}  // namespace

TEST_CASE("zero network maps every input to zero") {
  GridConfig g = check_grid();
  AnnealSchedule sched;
  sched.total_steps = 10;
  auto m = make_model<double>(g, 8, sched, 32, 32);  // all parameters zero
  const auto coords = random_coords(16, 1);
  ForwardContext<double> ctx;
  forward(m, std::span<const double>(coords), 0, SeededRng(0), Exec::kSerial, ctx);
  for (double y : ctx.y) CHECK(y == 0.0);
}

TEST_CASE("eval-mode forward is deterministic and integer-latent invariant") {
  auto m = random_model<double>(check_grid(), 8, 2, 100);
  m.train_mode = false;
  const auto coords = random_coords(20, 3);
  ForwardContext<double> a, b;
  forward(m, std::span<const double>(coords), 0, SeededRng(5), Exec::kSerial, a);
  forward(m, std::span<const double>(coords), 7, SeededRng(9), Exec::kSerial, b);
  CHECK(a.y == b.y);  // noise/step must not matter in eval mode

  // Re-quantizing already-integer latents is the identity.
  for (auto& lat : m.latents)
    for (auto& v : lat.values) v = std::round(v);
  ForwardContext<double> c;
  forward(m, std::span<const double>(coords), 0, SeededRng(5), Exec::kSerial, c);
  for (size_t l = 0; l < m.latents.size(); ++l)
    for (size_t e = 0; e < m.latents[l].size(); ++e)
      CHECK(c.q[l][e] == m.latents[l].values[e]);
}

TEST_CASE("decoder linearity: (2Q, W/2) equals (Q, W)") {
  auto m = random_model<double>(check_grid(), 8, 4, 100);
  m.train_mode = false;
  for (auto& lat : m.latents)
    for (auto& v : lat.values) v = std::round(v);
  m.decoder.bias.values.assign(m.decoder.bias.size(), 0.0);
  const auto coords = random_coords(12, 5);

  ForwardContext<double> base;
  forward(m, std::span<const double>(coords), 0, SeededRng(0), Exec::kSerial, base);

  for (auto& lat : m.latents)
    for (auto& v : lat.values) v *= 2.0;
  for (auto& w : m.decoder.weight.values) w *= 0.5;
  ForwardContext<double> scaled;
  forward(m, std::span<const double>(coords), 0, SeededRng(0), Exec::kSerial, scaled);
  for (size_t i = 0; i < base.y.size(); ++i)
    CHECK(scaled.y[i] == doctest::Approx(base.y[i]).epsilon(1e-12));
}

TEST_CASE("serial and parallel execution are bit-identical") {
  auto ms = random_model<double>(check_grid(), 8, 6, 100);
  auto mp = random_model<double>(check_grid(), 8, 6, 100);
  const auto coords = random_coords(64, 7);
  std::vector<double> targets(64 * 3, 0.25);

  ForwardContext<double> cs, cp;
  forward(ms, std::span<const double>(coords), 3, SeededRng(11), Exec::kSerial, cs);
  forward(mp, std::span<const double>(coords), 3, SeededRng(11), Exec::kParallel, cp);
  CHECK(cs.y == cp.y);

  backward(ms, cs, std::span<const double>(coords), std::span<const double>(targets),
           Exec::kSerial);
  backward(mp, cp, std::span<const double>(coords), std::span<const double>(targets),
           Exec::kParallel);
  const auto rs = rate_loss(ms, 3, SeededRng(11), 1e-4, Exec::kSerial);
  const auto rp = rate_loss(mp, 3, SeededRng(11), 1e-4, Exec::kParallel);
  CHECK(rs.total_bits_per_row == rp.total_bits_per_row);
  CHECK(ParamView(ms, true).grads() == ParamView(mp, true).grads());
}

TEST_CASE("mse decomposition and zero-loss gradients") {
  auto m = random_model<double>(check_grid(), 8, 8, 100);
  const auto coords = random_coords(8, 9);
  ForwardContext<double> ctx;
  ctx.qmode = QuantMode::kSoftSample;
  forward(m, std::span<const double>(coords), 1, SeededRng(2), Exec::kSerial, ctx);
  // Targets equal to predictions: MSE 0 and all distortion gradients 0.
  std::vector<double> targets(ctx.y.begin(), ctx.y.end());
  CHECK(mse_loss<double>(ctx.y, targets) == 0.0);
  ParamView view(m, false);
  view.zero_grads();
  backward(m, ctx, std::span<const double>(coords), std::span<const double>(targets),
           Exec::kSerial);
  for (double g : view.grads()) CHECK(g == 0.0);
}

TEST_CASE("rate gradients reach rows the batch never touches") {
  auto m = random_model<double>(check_grid(), 8, 10, 100);
  const auto coords = random_coords(1, 11);  // single coordinate
  ForwardContext<double> ctx;
  forward(m, std::span<const double>(coords), 0, SeededRng(4), Exec::kSerial, ctx);
  std::vector<double> targets(3, 0.0);
  backward(m, ctx, std::span<const double>(coords), std::span<const double>(targets),
           Exec::kSerial);
  rate_loss(m, 0, SeededRng(4), 1e-4, Exec::kSerial);
  // Level 1 has 64 rows; one coordinate touches at most 4. Some untouched row
  // still receives the lambda-scaled rate gradient.
  int nonzero = 0;
  for (double g : m.latents[1].grad) nonzero += g != 0.0;
  CHECK(nonzero > 8);
}

TEST_CASE("full-model finite difference check at 1e-3") {
  // 16 coordinates, fixed noise and gates, soft-sample forward so the
  // surrogate backward is the exact gradient of the evaluated function.
  GridConfig g = check_grid();
  auto m = random_model<double>(g, 8, 12, 100);
  const auto coords = random_coords(16, 13);
  const SeededRng rng(21);
  std::vector<double> targets(16 * 3);
  for (size_t i = 0; i < targets.size(); ++i) targets[i] = rng.uniform_at(1000 + i);
  const double lambda = 1e-2;
  const int64_t step = 5;

  ParamView view(m, true);
  auto eval_loss = [&](ShaciraModel<double>& model) {
    ForwardContext<double> ctx;
    ctx.qmode = QuantMode::kSoftSample;
    forward(model, std::span<const double>(coords), step, rng, Exec::kSerial, ctx);
    const double mse = mse_loss<double>(ctx.y, targets);
    ShaciraModel<double>& mm = model;
    const auto rl = rate_loss(mm, step, rng, 0.0, Exec::kSerial);
    return mse + lambda * rl.total_bits_per_row;
  };

  view.zero_grads();
  {
    ForwardContext<double> ctx;
    ctx.qmode = QuantMode::kSoftSample;
    forward(m, std::span<const double>(coords), step, rng, Exec::kSerial, ctx);
    backward(m, ctx, std::span<const double>(coords), std::span<const double>(targets),
             Exec::kSerial);
    rate_loss(m, step, rng, lambda, Exec::kSerial);
  }
  const std::vector<double> analytic = view.grads();
  const std::vector<double> x0 = view.values();

  auto f = [&](std::span<const double> v) {
    view.set_values(v);
    const double out = eval_loss(m);
    return out;
  };
  const double err = finite_diff_check(f, x0, std::span<const double>(analytic), 1e-5);
  view.set_values(x0);
  CHECK(err <= 1e-3);
}

TEST_CASE("forward reports the failing stage for non-finite activations") {
  auto m = random_model<double>(check_grid(), 8, 14, 100);
  m.mlp.b3.values[0] = std::numeric_limits<double>::infinity();
  const auto coords = random_coords(4, 15);
  ForwardContext<double> ctx;
  CHECK_THROWS_WITH_AS(
      forward(m, std::span<const double>(coords), 0, SeededRng(0), Exec::kSerial, ctx),
      doctest::Contains("output"), NumericError);
}

TEST_CASE("non-finite latents are rejected before quantization") {
  auto m = random_model<double>(check_grid(), 8, 16, 100);
  m.latents[0].values[3] = std::nan("");
  const auto coords = random_coords(4, 17);
  ForwardContext<double> ctx;
  CHECK_THROWS_AS(
      forward(m, std::span<const double>(coords), 0, SeededRng(0), Exec::kSerial, ctx),
      NumericError);
}

TEST_CASE("freeze rounds latents, builds tables, and enters eval mode") {
  auto m = random_model<double>(check_grid(), 8, 18, 100);
  freeze(m);
  CHECK(m.frozen);
  CHECK_FALSE(m.train_mode);
  REQUIRE(m.tables.size() == 1);
  uint64_t sum = 0;
  for (uint32_t f : m.tables[0].freq) sum += f;
  CHECK(sum == 65536);
  for (auto& lat : m.latents) {
    for (double v : lat.values) {
      CHECK(v == std::round(v));
      CHECK(m.tables[0].contains(int64_t(v)));
    }
  }
}

TEST_CASE("LOD masking zeroes exactly the fine levels") {
  auto m = random_model<double>(check_grid(), 8, 20, 100);
  m.train_mode = false;
  for (auto& lat : m.latents)
    for (auto& v : lat.values) v = std::round(v);
  const auto coords = random_coords(10, 21);

  // Hand-build the LOD-1 expectation: zero level 1's latents instead.
  auto masked = m;
  for (auto& v : masked.latents[1].values) v = 0.0;
  masked.decoder.bias.values.assign(masked.decoder.bias.size(), 0.0);
  auto lod = m;
  lod.decoder.bias.values.assign(lod.decoder.bias.size(), 0.0);
  lod.active_levels = 1;

  ForwardContext<double> cm, cl;
  forward(masked, std::span<const double>(coords), 0, SeededRng(0), Exec::kSerial, cm);
  forward(lod, std::span<const double>(coords), 0, SeededRng(0), Exec::kSerial, cl);
  for (size_t i = 0; i < cm.y.size(); ++i)
    CHECK(cl.y[i] == doctest::Approx(cm.y[i]).epsilon(1e-12));
}
