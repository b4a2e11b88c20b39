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

namespace shacira {

// Static description of the multi-resolution grid.
struct GridConfig {
  int d = 2;           // coordinate dimension (2 or 3)
  int levels = 6;      // L
  uint32_t r_min = 16; // coarsest per-axis resolution
  uint32_t r_max = 256;
  uint32_t table_size = 1u << 14;  // T, max rows per level, power of two
  int feature_dim = 1;             // F, decoded feature width
  int latent_dim = 1;              // D, stored latent width

  void validate() const {
    if (d != 2 && d != 3) throw ConfigError("GridConfig: d must be 2 or 3");
    if (levels < 1) throw ConfigError("GridConfig: levels must be >= 1");
    if (r_min < 1) throw ConfigError("GridConfig: r_min must be >= 1");
    if (r_max < r_min) throw ConfigError("GridConfig: r_max < r_min");
    if (table_size < 1 || (table_size & (table_size - 1)) != 0)
      throw ConfigError("GridConfig: table_size must be a power of two");
    if (feature_dim < 1) throw ConfigError("GridConfig: feature_dim must be >= 1");
    if (latent_dim < 1) throw ConfigError("GridConfig: latent_dim must be >= 1");
  }
};

struct LevelLayout {
  uint32_t resolution = 0;  // R_l, per-axis
  uint32_t rows = 0;        // T_l = min(R_l^d, T)
  bool hashed = false;      // direct iff R_l^d <= T
};

// Geometric per-level growth from r_min to r_max; rows capped at table_size.
inline std::vector<LevelLayout> level_layout(const GridConfig& cfg) {
  cfg.validate();
  std::vector<LevelLayout> out(cfg.levels);
  const double b = cfg.levels > 1
                       ? std::exp((std::log(double(cfg.r_max)) - std::log(double(cfg.r_min))) /
                                  double(cfg.levels - 1))
                       : 1.0;
  for (int l = 0; l < cfg.levels; ++l) {
    const uint32_t r = static_cast<uint32_t>(std::floor(double(cfg.r_min) * std::pow(b, l)));
    uint64_t dense = 1;
    for (int k = 0; k < cfg.d; ++k) dense *= r;
    LevelLayout& lay = out[l];
    lay.resolution = r;
    lay.hashed = dense > cfg.table_size;
    lay.rows = lay.hashed ? cfg.table_size : static_cast<uint32_t>(dense);
  }
  return out;
}

namespace detail {

// Hash primes shared with the direct-mode stride convention; the first prime
// is 1 so axis 0 stays coherent in memory.
inline constexpr uint64_t kHashPrimes[3] = {1ull, 2654435761ull, 805459861ull};

// Unchecked corner lookup. Direct mode wraps each component mod R_l (only the
// far boundary vertex ever wraps) and linearizes row-major with axis 0
// fastest; hashed mode XORs prime-multiplied components and masks by T_l.
inline uint32_t corner_index_unchecked(const int64_t* cell, int d, const LevelLayout& lay) {
  if (!lay.hashed) {
    uint64_t idx = 0;
    uint64_t stride = 1;
    for (int i = 0; i < d; ++i) {
      const uint64_t c = static_cast<uint64_t>(cell[i]) % lay.resolution;
      idx += c * stride;
      stride *= lay.resolution;
    }
    return static_cast<uint32_t>(idx);
  }
  uint64_t h = 0;
  for (int i = 0; i < d; ++i) h ^= static_cast<uint64_t>(cell[i]) * kHashPrimes[i];
  return static_cast<uint32_t>(h & (lay.rows - 1));
}

}  // namespace detail

inline uint32_t corner_index(std::span<const int64_t> cell, const LevelLayout& lay) {
  const int d = static_cast<int>(cell.size());
  for (int i = 0; i < d; ++i) {
    if (cell[i] < 0 || cell[i] > int64_t(lay.resolution))
      throw ConfigError("corner_index: component " + std::to_string(i) + " out of [0, R_l]");
  }
  return detail::corner_index_unchecked(cell.data(), d, lay);
}

// The 2^d corner rows around a coordinate and their interpolation weights.
struct CornerSet {
  uint32_t index[8];
  double weight[8];
  int count = 0;
};

// x is normalized to [0,1]^d; scaled coordinates are clamped to [0, R_l] and
// ceil components to R_l, so a coordinate exactly on a lattice point gets a
// one-hot weight on that row.
template <typename Real>
CornerSet gather_corners(std::span<const Real> x, const LevelLayout& lay, int d) {
  int64_t base[3];
  double frac[3];
  for (int i = 0; i < d; ++i) {
    double s = static_cast<double>(x[i]) * lay.resolution;
    s = std::min(std::max(s, 0.0), double(lay.resolution));
    double fl = std::floor(s);
    base[i] = static_cast<int64_t>(fl);
    frac[i] = s - fl;
  }
  CornerSet cs;
  cs.count = 1 << d;
  for (int c = 0; c < cs.count; ++c) {
    int64_t cell[3];
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      const int up = (c >> i) & 1;
      int64_t comp = base[i] + up;
      if (comp > int64_t(lay.resolution)) comp = lay.resolution;
      cell[i] = comp;
      w *= up ? frac[i] : 1.0 - frac[i];
    }
    cs.index[c] = detail::corner_index_unchecked(cell, d, lay);
    cs.weight[c] = w;
  }
  return cs;
}

// d-linear blend of the corner rows of a T_l x F feature table.
template <typename Real>
void interpolate(std::span<const Real> x, std::span<const Real> features, const LevelLayout& lay,
                 int d, int f_dim, Real* out) {
  const CornerSet cs = gather_corners(x, lay, d);
  for (int f = 0; f < f_dim; ++f) out[f] = Real(0);
  for (int c = 0; c < cs.count; ++c) {
    const Real* row = features.data() + size_t(cs.index[c]) * f_dim;
    const Real w = Real(cs.weight[c]);
    for (int f = 0; f < f_dim; ++f) out[f] += w * row[f];
  }
}

// Scatters weight * upstream into the contributing rows, accumulating so that
// colliding hash rows sum their contributions.
template <typename Real>
void interpolate_backward(std::span<const Real> x, std::span<const Real> upstream,
                          const LevelLayout& lay, int d, int f_dim,
                          std::span<Real> feature_grads) {
  const CornerSet cs = gather_corners(x, lay, d);
  for (int c = 0; c < cs.count; ++c) {
    Real* row = feature_grads.data() + size_t(cs.index[c]) * f_dim;
    const Real w = Real(cs.weight[c]);
    for (int f = 0; f < f_dim; ++f) row[f] += w * upstream[f];
  }
}

// Concatenation in level order, coarsest first. Levels at index >=
// active_levels contribute zeros (the LOD-masked forward path).
template <typename Real>
void concat_features(std::span<const Real> per_level, int levels, int f_dim, int active_levels,
                     Real* out) {
  for (int l = 0; l < levels; ++l) {
    for (int f = 0; f < f_dim; ++f) {
      out[l * f_dim + f] = l < active_levels ? per_level[l * f_dim + f] : Real(0);
    }
  }
}

}  // namespace shacira
