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

#include "shacira/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "shacira/common.hpp"
#include "shacira/quantizer.hpp"

namespace shacira {

namespace {

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

}  // namespace

ImageBuffer load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path + "'");
  if (next_token(in) != "P6") throw FormatError("'" + path + "' is not a binary PPM (P6)");
  ImageBuffer img;
  try {
    img.width = uint32_t(std::stoul(next_token(in)));
    img.height = uint32_t(std::stoul(next_token(in)));
    const unsigned long maxval = std::stoul(next_token(in));
    if (maxval != 255) throw FormatError("'" + path + "': only 8-bit PPM supported");
  } catch (const std::logic_error&) {
    throw FormatError("'" + path + "': malformed PPM header");
  }
  if (img.width == 0 || img.height == 0) throw FormatError("'" + path + "': empty image");
  const size_t n = img.pixel_count() * ImageBuffer::kChannels;
  std::vector<uint8_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(n));
  if (size_t(in.gcount()) != n) throw FormatError("'" + path + "': truncated pixel data");
  img.pixels.resize(n);
  for (size_t i = 0; i < n; ++i) img.pixels[i] = float(raw[i]) / 255.0f;
  return img;
}

void save_ppm(const ImageBuffer& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f;
    raw[i] = uint8_t(std::clamp(round_deterministic(double(v)), 0.0, 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace shacira
