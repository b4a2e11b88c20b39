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
#include <string>
#include <vector>

namespace shacira {

// Row-major RGB image with values in [0,1]. 8-bit files map v -> v/255 on
// load; saving rounds half-to-even back to 8 bits.
struct ImageBuffer {
  uint32_t width = 0;
  uint32_t height = 0;
  static constexpr int kChannels = 3;
  std::vector<float> pixels;  // height * width * 3

  size_t pixel_count() const { return size_t(width) * height; }
  float& at(uint32_t row, uint32_t col, int c) {
    return pixels[(size_t(row) * width + col) * kChannels + c];
  }
  float at(uint32_t row, uint32_t col, int c) const {
    return pixels[(size_t(row) * width + col) * kChannels + c];
  }
};

// Binary PPM (P6), 8-bit only.
ImageBuffer load_ppm(const std::string& path);
void save_ppm(const ImageBuffer& img, const std::string& path);

}  // namespace shacira
