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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "shacira/common.hpp"
#include "shacira/image.hpp"
#include "shacira/rng.hpp"

using namespace shacira;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
  return fs::temp_directory_path() / ("shacira_test_" + name);
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out.write(s.data(), std::streamsize(s.size()));
}

ImageBuffer make_image(uint32_t w, uint32_t h, uint64_t seed) {
  ImageBuffer img;
  img.width = w;
  img.height = h;
  img.pixels.resize(size_t(w) * h * 3);
  const SeededRng r(seed);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = float(r.uniform_at(i));
  return img;
}

// The CLI binary sits next to the test executables in the build tree.
std::string cli_path() {
  if (fs::exists("./shacira")) return "./shacira";
  return "../build/shacira";
}

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("ppm round trip is exact at 8-bit resolution") {
  const auto img = make_image(7, 5, 1);
  const auto p = tmp_file("roundtrip.ppm");
  save_ppm(img, p.string());
  const auto back = load_ppm(p.string());
  REQUIRE(back.width == 7);
  REQUIRE(back.height == 5);
  // Values survive one save/load exactly once quantized to 8 bits.
  const auto p2 = tmp_file("roundtrip2.ppm");
  save_ppm(back, p2.string());
  const auto back2 = load_ppm(p2.string());
  CHECK(back2.pixels == back.pixels);
  fs::remove(p);
  fs::remove(p2);
}

TEST_CASE("ppm header comments are skipped") {
  const auto p = tmp_file("comment.ppm");
  std::string body = "P6 # format\n# a comment line\n2 1\n# another\n255\n";
  body += std::string("\x10\x20\x30\x40\x50\x60", 6);
  write_bytes(p, body);
  const auto img = load_ppm(p.string());
  CHECK(img.width == 2);
  CHECK(img.height == 1);
  CHECK(img.pixels[0] == doctest::Approx(16.0 / 255.0));
  CHECK(img.pixels[5] == doctest::Approx(96.0 / 255.0));
  fs::remove(p);
}

TEST_CASE("ppm save rounds half to even") {
  ImageBuffer img;
  img.width = 2;
  img.height = 1;
  // 1.5/255 and 2.5/255 both sit exactly on a .5 boundary after scaling.
  img.pixels = {1.5f / 255.0f, 2.5f / 255.0f, 0.0f, 0.0f, 0.0f, 0.0f};
  const auto p = tmp_file("halfeven.ppm");
  save_ppm(img, p.string());
  std::ifstream in(p, std::ios::binary);
  std::string header;
  std::getline(in, header);  // P6
  std::getline(in, header);  // dims
  std::getline(in, header);  // maxval
  char px[6];
  in.read(px, 6);
  CHECK(uint8_t(px[0]) == 2);  // 1.5 -> 2
  CHECK(uint8_t(px[1]) == 2);  // 2.5 -> 2
  fs::remove(p);
}

TEST_CASE("ppm loader rejects malformed inputs") {
  const auto p = tmp_file("bad.ppm");
  CHECK_THROWS_AS(load_ppm((tmp_file("missing_dir") / "nope.ppm").string()), IoError);

  write_bytes(p, "P5\n2 2\n255\n....");
  CHECK_THROWS_AS(load_ppm(p.string()), FormatError);

  write_bytes(p, "P6\nabc 2\n255\n");
  CHECK_THROWS_AS(load_ppm(p.string()), FormatError);

  write_bytes(p, "P6\n2 2\n65535\n");
  CHECK_THROWS_AS(load_ppm(p.string()), FormatError);

  write_bytes(p, "P6\n2 2\n255\nxyz");  // 12 pixel bytes expected
  CHECK_THROWS_AS(load_ppm(p.string()), FormatError);

  write_bytes(p, "P6\n0 2\n255\n");
  CHECK_THROWS_AS(load_ppm(p.string()), FormatError);
  fs::remove(p);
}

TEST_CASE("cli encode, eval, lod, and decode round trip") {
  const auto src = tmp_file("cli_src.ppm");
  save_ppm(make_image(16, 16, 2), src.string());
  const auto out = tmp_file("cli_out.shcr");
  const auto dec = tmp_file("cli_dec.ppm");

  const std::string grid = "--levels 3 --min-res 2 --max-res 8 --table-size 64 --mlp-width 4";
  CHECK(run_cli("encode " + src.string() + " --out " + out.string() + " --steps 30 --seed 3 " +
                grid) == 0);
  REQUIRE(fs::exists(out));
  CHECK(run_cli("eval " + out.string() + " --ref " + src.string()) == 0);
  const auto lod_stem = tmp_file("cli_lod");
  CHECK(run_cli("lod " + out.string() + " --out " + lod_stem.string()) == 0);
  for (int l = 1; l <= 3; ++l) {
    const fs::path p(lod_stem.string() + "_lod" + std::to_string(l) + ".ppm");
    CHECK(fs::exists(p));
    fs::remove(p);
  }
  CHECK(run_cli("decode " + out.string() + " --out " + dec.string()) == 0);
  REQUIRE(fs::exists(dec));
  const auto img = load_ppm(dec.string());
  CHECK(img.width == 16);
  CHECK(img.height == 16);

  // Same seed encodes to byte-identical output.
  const auto out2 = tmp_file("cli_out2.shcr");
  CHECK(run_cli("encode " + src.string() + " --out " + out2.string() + " --steps 30 --seed 3 " +
                grid) == 0);
  std::ifstream a(out, std::ios::binary), b(out2, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(!sa.empty());

  fs::remove(src);
  fs::remove(out);
  fs::remove(out2);
  fs::remove(dec);
}

TEST_CASE("cli exit codes distinguish failure classes") {
  CHECK(run_cli("") == 1);                         // no subcommand
  CHECK(run_cli("encode") == 1);                   // missing arguments
  CHECK(run_cli("encode /nonexistent.ppm --out /tmp/x.shcr --steps 1") == 2);
  const auto junk = tmp_file("junk.shcr");
  write_bytes(junk, "not a bitstream at all");
  CHECK(run_cli("decode " + junk.string() + " --out /tmp/x.ppm") == 3);
  fs::remove(junk);
}

TEST_CASE("cli config file supplies defaults that flags override") {
  const auto src = tmp_file("cfg_src.ppm");
  save_ppm(make_image(8, 8, 4), src.string());
  const auto cfgf = tmp_file("train.cfg");
  write_bytes(cfgf,
              "# training config\n"
              "steps = 25\n"
              "levels = 3\n"
              "r_min = 2\n"
              "r_max = 8\n"
              "table_size = 64\n"
              "mlp_width = 4\n"
              "seed = 9\n");
  const auto out1 = tmp_file("cfg1.shcr");
  const auto out2 = tmp_file("cfg2.shcr");
  CHECK(run_cli("encode " + src.string() + " --config " + cfgf.string() + " --out " +
                out1.string()) == 0);
  // A flag overrides the file: a different seed changes the bitstream.
  CHECK(run_cli("encode " + src.string() + " --config " + cfgf.string() + " --out " +
                out2.string() + " --seed 10") == 0);
  std::ifstream a(out1, std::ios::binary), b(out2, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(!sa.empty());
  CHECK(sa != sb);
  fs::remove(src);
  fs::remove(cfgf);
  fs::remove(out1);
  fs::remove(out2);
}
