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

#include <cstdint>
#include <span>
#include <vector>

#include "shacira/common.hpp"
#include "shacira/density.hpp"

namespace shacira {

// Byte-oriented range coder with a 64-bit range register. Carries are
// propagated through a cache/pending-0xFF chain, and all arithmetic is
// integer-only, so output bytes are identical on every platform. The flush
// rounds the interval low end up to a 2^56 boundary and trims trailing zero
// bytes; the decoder zero-pads past the end of its input.
class RangeEncoder {
 public:
  // cum/freq are table entries with frequencies summing to 2^precision.
  void encode(uint32_t cum, uint32_t freq, uint32_t precision);
  std::vector<uint8_t> finish();

 private:
  void shift_low();

  unsigned __int128 low_ = 0;
  uint64_t range_ = ~0ull;
  uint8_t cache_ = 0;
  uint64_t pending_ = 1;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);

  // Returns the decoded symbol's table slot; caller maps slot -> symbol.
  uint32_t decode(const PmfTable& table);

 private:
  uint8_t next_byte();

  std::span<const uint8_t> in_;
  size_t pos_ = 0;
  uint64_t code_ = 0;
  uint64_t range_ = ~0ull;
};

// Encodes integer symbols under one frozen table. Throws on out-of-range
// symbols, naming the offending position.
std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, const PmfTable& table);

// Exact inverse of range_encode for `count` symbols.
std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, size_t count,
                                  const PmfTable& table);

}  // namespace shacira
