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
// Container layout (all multi-byte integers little-endian):
//   magic "SHCR" | version u16
//   grid: d u8, levels u8, r_min u32, r_max u32, table_size u32,
//         feature_dim u16, latent_dim u16
//   image: width u32, height u32, channels u8
//   mlp: width u16
//   raw float32 blocks, each prefixed by a u32 count:
//     decoder weight, decoder bias, mlp w1, b1, w2, b2, w3, b3,
//     then one density-model block per latent dimension
//   per latent dimension: q_min i32, q_max i32, precision u8,
//     frequencies u32 x (q_max - q_min + 1)
//   per level, coarse to fine: payload_len u32, q_min i32, q_max i32,
//     rows u32, payload bytes (symbols dim-major, coded per dimension)
// Any prefix through level l decodes on its own.

#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "shacira/common.hpp"
#include "shacira/model.hpp"
#include "shacira/rangecoder.hpp"

namespace shacira {

inline constexpr char kMagic[4] = {'S', 'H', 'C', 'R'};
inline constexpr uint16_t kVersion = 1;

namespace wire {

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  std::vector<uint8_t> take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

 private:
  std::vector<uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : buf_(b) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() {
    auto b = take(2);
    return uint16_t(b[0]) | uint16_t(b[1]) << 8;
  }
  uint32_t u32() {
    auto b = take(4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::span<const uint8_t> take(size_t n) {
    if (pos_ + n > buf_.size())
      throw FormatError("bitstream: truncated (need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ")");
    auto s = buf_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::span<const uint8_t> buf_;
  size_t pos_ = 0;
};

}  // namespace wire

namespace detail {

template <typename Real>
void write_block(wire::Writer& w, const Tensor<Real>& t) {
  w.u32(static_cast<uint32_t>(t.size()));
  for (Real v : t.values) w.f32(static_cast<float>(v));
}

inline void read_block(wire::Reader& r, Tensor<float>& t) {
  const uint32_t count = r.u32();
  if (count != t.size())
    throw FormatError("bitstream: block '" + t.name + "' declares " + std::to_string(count) +
                      " floats, expected " + std::to_string(t.size()));
  for (size_t i = 0; i < t.size(); ++i) t.values[i] = r.f32();
}

}  // namespace detail

// Serializes a frozen model. Byte-identical output for identical models.
template <typename Real>
std::vector<uint8_t> serialize_model(const ShaciraModel<Real>& m) {
  if (!m.frozen) throw ConfigError("serialize_model: model must be frozen first");
  const int D = m.grid.latent_dim;
  wire::Writer w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.u16(kVersion);
  w.u8(uint8_t(m.grid.d));
  w.u8(uint8_t(m.grid.levels));
  w.u32(m.grid.r_min);
  w.u32(m.grid.r_max);
  w.u32(m.grid.table_size);
  w.u16(uint16_t(m.grid.feature_dim));
  w.u16(uint16_t(m.grid.latent_dim));
  w.u32(m.image_w);
  w.u32(m.image_h);
  w.u8(m.channels);
  w.u16(uint16_t(m.mlp.width));

  detail::write_block(w, m.decoder.weight);
  detail::write_block(w, m.decoder.bias);
  detail::write_block(w, m.mlp.w1);
  detail::write_block(w, m.mlp.b1);
  detail::write_block(w, m.mlp.w2);
  detail::write_block(w, m.mlp.b2);
  detail::write_block(w, m.mlp.w3);
  detail::write_block(w, m.mlp.b3);
  for (int dd = 0; dd < D; ++dd) detail::write_block(w, m.density[dd]);

  for (int dd = 0; dd < D; ++dd) {
    const PmfTable& t = m.tables[dd];
    w.i32(t.q_min);
    w.i32(t.q_max);
    w.u8(uint8_t(t.precision));
    for (uint32_t f : t.freq) w.u32(f);
  }

  for (int l = 0; l < m.grid.levels; ++l) {
    const Tensor<Real>& lat = m.latents[l];
    const size_t rows = lat.rows();
    RangeEncoder enc;
    int32_t q_min = 0, q_max = 0;
    bool first = true;
    for (int dd = 0; dd < D; ++dd) {
      const PmfTable& t = m.tables[dd];
      for (size_t i = 0; i < rows; ++i) {
        const int32_t q = int32_t(lat.at(i, dd));
        if (first) {
          q_min = q_max = q;
          first = false;
        } else {
          q_min = std::min(q_min, q);
          q_max = std::max(q_max, q);
        }
        if (!t.contains(q))
          throw FormatError("serialize_model: latent symbol outside table range");
        const uint32_t slot = uint32_t(q - t.q_min);
        enc.encode(t.cum[slot], t.freq[slot], t.precision);
      }
    }
    const std::vector<uint8_t> payload = enc.finish();
    w.u32(uint32_t(payload.size()));
    w.i32(q_min);
    w.i32(q_max);
    w.u32(uint32_t(rows));
    w.bytes(payload);
  }
  return w.take();
}

namespace detail {

inline ShaciraModel<float> parse_model(std::span<const uint8_t> bytes, int max_lod,
                                       bool require_full) {
  wire::Reader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError("bitstream: bad magic");
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError("bitstream: unsupported version " + std::to_string(version));

  GridConfig grid;
  grid.d = r.u8();
  grid.levels = r.u8();
  grid.r_min = r.u32();
  grid.r_max = r.u32();
  grid.table_size = r.u32();
  grid.feature_dim = r.u16();
  grid.latent_dim = r.u16();
  const uint32_t image_w = r.u32();
  const uint32_t image_h = r.u32();
  const uint8_t channels = r.u8();
  const uint16_t mlp_width = r.u16();
  grid.validate();
  if (max_lod < 1 || max_lod > grid.levels)
    throw ConfigError("decode: lod must be in [1, " + std::to_string(grid.levels) + "]");

  ShaciraModel<float> m = make_model<float>(grid, mlp_width, AnnealSchedule{}, image_w, image_h);
  m.channels = channels;
  read_block(r, m.decoder.weight);
  read_block(r, m.decoder.bias);
  read_block(r, m.mlp.w1);
  read_block(r, m.mlp.b1);
  read_block(r, m.mlp.w2);
  read_block(r, m.mlp.b2);
  read_block(r, m.mlp.w3);
  read_block(r, m.mlp.b3);
  for (int dd = 0; dd < grid.latent_dim; ++dd) read_block(r, m.density[dd]);

  m.tables.resize(grid.latent_dim);
  for (int dd = 0; dd < grid.latent_dim; ++dd) {
    PmfTable& t = m.tables[dd];
    t.q_min = r.i32();
    t.q_max = r.i32();
    t.precision = r.u8();
    if (t.q_min > t.q_max || t.precision == 0 || t.precision > 24)
      throw FormatError("bitstream: invalid coder table header");
    const size_t n = size_t(int64_t(t.q_max) - t.q_min + 1);
    t.freq.resize(n);
    uint64_t sum = 0;
    for (size_t i = 0; i < n; ++i) {
      t.freq[i] = r.u32();
      if (t.freq[i] == 0) throw FormatError("bitstream: zero-frequency coder symbol");
      sum += t.freq[i];
    }
    if (sum != (1ull << t.precision))
      throw FormatError("bitstream: coder table frequencies do not sum to 2^precision");
    t.rebuild_cum();
  }

  for (int l = 0; l < max_lod; ++l) {
    const uint32_t payload_len = r.u32();
    r.i32();  // per-level q_min (informational)
    r.i32();  // per-level q_max
    const uint32_t rows = r.u32();
    if (rows != m.layout[l].rows)
      throw FormatError("bitstream: level " + std::to_string(l) + " declares " +
                        std::to_string(rows) + " rows, expected " +
                        std::to_string(m.layout[l].rows));
    const auto payload = r.take(payload_len);
    RangeDecoder dec(payload);
    Tensor<float>& lat = m.latents[l];
    for (int dd = 0; dd < grid.latent_dim; ++dd) {
      const PmfTable& t = m.tables[dd];
      for (uint32_t i = 0; i < rows; ++i) {
        lat.at(i, dd) = float(t.q_min + int32_t(dec.decode(t)));
      }
    }
  }
  if (require_full && r.remaining() != 0)
    throw FormatError("bitstream: " + std::to_string(r.remaining()) +
                      " trailing bytes after declared content");

  m.active_levels = max_lod;
  m.train_mode = false;
  m.frozen = true;
  return m;
}

}  // namespace detail

inline ShaciraModel<float> deserialize_model(std::span<const uint8_t> bytes) {
  wire::Reader probe(bytes);
  probe.take(4);
  probe.u16();
  probe.u8();
  const int levels = probe.u8();
  if (levels < 1) throw FormatError("bitstream: zero levels");
  return detail::parse_model(bytes, levels, /*require_full=*/true);
}

// Decodes only the first `lod` level payloads; levels above contribute zero
// feature vectors. Works on physically truncated prefixes.
inline ShaciraModel<float> decode_lod_prefix(std::span<const uint8_t> bytes, int lod) {
  return detail::parse_model(bytes, lod, /*require_full=*/false);
}

namespace detail {

// Walks the container and reports, per level, the prefix length ending after
// that level's payload and the payload length itself.
inline void walk_levels(std::span<const uint8_t> bytes, std::vector<size_t>* prefixes,
                        std::vector<size_t>* payloads) {
  const ShaciraModel<float> m = deserialize_model(bytes);  // validates
  wire::Reader r(bytes);
  r.take(4);
  r.u16();
  r.take(1 + 1 + 4 + 4 + 4 + 2 + 2 + 4 + 4 + 1 + 2);
  auto skip_block = [&r] { r.take(size_t(r.u32()) * 4); };
  for (int b = 0; b < 8 + m.grid.latent_dim; ++b) skip_block();
  for (int dd = 0; dd < m.grid.latent_dim; ++dd) {
    const int32_t lo = r.i32();
    const int32_t hi = r.i32();
    r.u8();
    r.take(size_t(int64_t(hi) - lo + 1) * 4);
  }
  for (int l = 0; l < m.grid.levels; ++l) {
    const uint32_t payload_len = r.u32();
    r.take(4 + 4 + 4 + payload_len);
    if (prefixes) prefixes->push_back(r.pos());
    if (payloads) payloads->push_back(payload_len);
  }
}

}  // namespace detail

// Byte length of the container prefix that ends after each level's payload.
inline std::vector<size_t> prefix_sizes(std::span<const uint8_t> bytes) {
  std::vector<size_t> out;
  detail::walk_levels(bytes, &out, nullptr);
  return out;
}

// Per-level entropy-coded payload lengths in bytes.
inline std::vector<size_t> payload_sizes(std::span<const uint8_t> bytes) {
  std::vector<size_t> out;
  detail::walk_levels(bytes, nullptr, &out);
  return out;
}

}  // namespace shacira
