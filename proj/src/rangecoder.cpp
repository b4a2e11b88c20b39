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

#include "shacira/rangecoder.hpp"

#include <algorithm>
#include <string>

namespace shacira {

namespace {
constexpr uint64_t kTop = 1ull << 56;
constexpr uint64_t kLowMask56 = kTop - 1;
}  // namespace

void RangeEncoder::shift_low() {
  const uint64_t lo = static_cast<uint64_t>(low_);
  const uint64_t carry = static_cast<uint64_t>(low_ >> 64);
  if (lo < 0xFF00000000000000ull || carry != 0) {
    uint8_t byte = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(byte + carry));
      byte = 0xFF;
    } while (--pending_ != 0);
    cache_ = static_cast<uint8_t>(lo >> 56);
  }
  ++pending_;
  low_ = static_cast<unsigned __int128>((lo & kLowMask56) << 8);
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq, uint32_t precision) {
  range_ >>= precision;
  low_ += static_cast<unsigned __int128>(cum) * range_;
  range_ *= freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  // Any multiple of 2^56 inside [low, low + range) pins the stream; range is
  // always >= 2^56 here, so the next boundary above low works.
  low_ = (low_ + kLowMask56) & ~static_cast<unsigned __int128>(kLowMask56);
  shift_low();
  shift_low();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : in_(bytes) {
  // Mirrors the encoder's initial cache byte plus the first eight payload
  // bytes; the leading byte falls out of the 64-bit window.
  for (int i = 0; i < 9; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  return pos_ < in_.size() ? in_[pos_++] : 0;
}

uint32_t RangeDecoder::decode(const PmfTable& table) {
  range_ >>= table.precision;
  uint64_t target = code_ / range_;
  const uint64_t total = table.total();
  if (target >= total) target = total - 1;
  // cum is strictly increasing once offset by slot, so upper_bound finds the
  // unique slot with cum[s] <= target < cum[s+1].
  const auto it = std::upper_bound(table.cum.begin(), table.cum.end(), target);
  const uint32_t slot = static_cast<uint32_t>(it - table.cum.begin()) - 1;
  code_ -= static_cast<uint64_t>(table.cum[slot]) * range_;
  range_ *= table.freq[slot];
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return slot;
}

std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, const PmfTable& table) {
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) {
    if (!table.contains(symbols[i])) {
      throw FormatError("range_encode: symbol " + std::to_string(symbols[i]) + " at position " +
                        std::to_string(i) + " outside table range [" + std::to_string(table.q_min) +
                        ", " + std::to_string(table.q_max) + "]");
    }
    const uint32_t slot = static_cast<uint32_t>(symbols[i] - table.q_min);
    enc.encode(table.cum[slot], table.freq[slot], table.precision);
  }
  return enc.finish();
}

std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, size_t count,
                                  const PmfTable& table) {
  RangeDecoder dec(bytes);
  std::vector<int32_t> out(count);
  for (size_t i = 0; i < count; ++i) {
    out[i] = table.q_min + static_cast<int32_t>(dec.decode(table));
  }
  return out;
}

}  // namespace shacira
