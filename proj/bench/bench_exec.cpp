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
//
// Times the serial reference path against the OpenMP path on one synthetic
// training step and verifies that both produce bit-identical results.

#include <chrono>
#include <cstring>
#include <iostream>
#include <vector>

#include "shacira/trainer.hpp"

using namespace shacira;

namespace {

ImageBuffer synthetic_image(uint32_t w, uint32_t h) {
  ImageBuffer img;
  img.width = w;
  img.height = h;
  img.pixels.resize(size_t(w) * h * 3);
  const SeededRng rng(7);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = float(rng.uniform_at(i));
  return img;
}

struct StepResult {
  double mse = 0.0;
  double rate = 0.0;
  std::vector<double> latent_grads;
  double seconds = 0.0;
};

StepResult one_step(Exec exec, const ImageBuffer& img, const TrainConfig& cfg,
                    const GridConfig& grid, int reps) {
  ShaciraModel<double> m = init_params<double>(cfg, grid, img.width, img.height);
  const SeededRng rng(cfg.seed);
  std::vector<double> coords, targets;
  sample_batch<double>(img, 0, rng, coords, targets);

  StepResult r;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < reps; ++k) {
    for (auto& lat : m.latents) lat.zero_grad();
    m.decoder.weight.zero_grad();
    m.decoder.bias.zero_grad();
    m.mlp.w1.zero_grad();
    m.mlp.b1.zero_grad();
    m.mlp.w2.zero_grad();
    m.mlp.b2.zero_grad();
    m.mlp.w3.zero_grad();
    m.mlp.b3.zero_grad();
    for (auto& t : m.density) t.zero_grad();

    ForwardContext<double> ctx;
    forward(m, std::span<const double>(coords), k, rng, exec, ctx);
    r.mse = double(mse_loss<double>(ctx.y, targets));
    backward(m, ctx, std::span<const double>(coords), std::span<const double>(targets), exec);
    r.rate = rate_loss(m, k, rng, 1e-4, exec).total_bits_per_row;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.latent_grads.clear();
  for (const auto& lat : m.latents)
    r.latent_grads.insert(r.latent_grads.end(), lat.grad.begin(), lat.grad.end());
  return r;
}

}  // namespace

int main() {
  const ImageBuffer img = synthetic_image(128, 128);
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.seed = 3;
  GridConfig grid;
  grid.levels = 4;
  grid.r_min = 8;
  grid.r_max = 64;
  grid.table_size = 1u << 12;

  const int reps = 5;
  const StepResult serial = one_step(Exec::kSerial, img, cfg, grid, reps);
  const StepResult parallel = one_step(Exec::kParallel, img, cfg, grid, reps);

  bool identical = serial.mse == parallel.mse && serial.rate == parallel.rate &&
                   serial.latent_grads.size() == parallel.latent_grads.size();
  if (identical) {
    identical = std::memcmp(serial.latent_grads.data(), parallel.latent_grads.data(),
                            serial.latent_grads.size() * sizeof(double)) == 0;
  }

  std::cout << "batch=" << img.pixel_count() << " reps=" << reps << "\n";
  std::cout << "serial_seconds=" << serial.seconds << "\n";
  std::cout << "parallel_seconds=" << parallel.seconds << "\n";
  std::cout << "speedup=" << serial.seconds / parallel.seconds << "\n";
  std::cout << "bit_identical=" << (identical ? "yes" : "no") << "\n";
  return identical ? 0 : 1;
}
