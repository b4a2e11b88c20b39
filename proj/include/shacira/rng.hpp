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
#include <string_view>

namespace shacira {

// Counter-based generator built on the SplitMix64 finalizer. Draw i of a
// stream is mix(key + i * GOLDEN), so streams are random-access and a stream
// for one parameter group never shifts when another group draws more values.
// Substreams are keyed by (seed, group id); group ids are FNV-1a hashes of a
// label plus an integer, so adding a group never perturbs existing ones.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed, uint64_t group = 0)
      : key_(mix(seed ^ mix(group + 0x632be59bd9b4e019ull))) {}

  SeededRng substream(std::string_view label, uint64_t index = 0) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : label) h = (h ^ static_cast<uint8_t>(c)) * 0x100000001b3ull;
    h = (h ^ index) * 0x100000001b3ull;
    SeededRng r(0);
    r.key_ = mix(key_ ^ mix(h));
    return r;
  }

  // Random access by counter; does not advance state.
  uint64_t bits_at(uint64_t i) const { return mix(key_ + i * kGolden); }

  // Uniform in [0, 1).
  double uniform_at(uint64_t i) const {
    return static_cast<double>(bits_at(i) >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1); safe as a log argument.
  double uniform_open_at(uint64_t i) const {
    return (static_cast<double>(bits_at(i) >> 11) + 0.5) * 0x1.0p-53;
  }

  double gumbel_at(uint64_t i) const {
    return -std::log(-std::log(uniform_open_at(i)));
  }

  // Sequential drawing for callers that do not need random access.
  uint64_t next_bits() { return bits_at(counter_++); }
  double next_uniform() {
    return static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
  }
  // Uniform integer in [0, n), n > 0. Modulo bias is < 2^-32 for n < 2^32.
  uint64_t next_below(uint64_t n) { return next_bits() % n; }

 private:
  static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

  static uint64_t mix(uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace shacira
