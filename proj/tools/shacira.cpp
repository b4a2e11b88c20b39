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

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shacira/bitstream.hpp"
#include "shacira/image.hpp"
#include "shacira/trainer.hpp"

namespace {

using namespace shacira;

// Exit codes: 0 success, 1 usage, 2 I/O, 3 format, 4 divergence.
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitFormat = 3;
constexpr int kExitDiverged = 4;

struct Options {
  TrainConfig train;
  GridConfig grid;
  std::string config_path;
  std::string input;
  std::string out;
  int lod = 0;  // 0 = all levels
  std::vector<uint32_t> sweep_tables;
};

uint64_t default_seed() {
  if (const char* env = std::getenv("SHACIRA_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 0;
}

// Flat key=value config file; '#' starts a comment. Keys mirror the
// TrainConfig/GridConfig field names.
void apply_config_file(const std::string& path, Options& o) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      const size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "steps") o.train.steps = std::stoll(val);
      else if (key == "lambda_i") o.train.lambda_i = std::stod(val);
      else if (key == "lr_mlp") o.train.lr_mlp = std::stod(val);
      else if (key == "lr_latents") o.train.lr_latents = std::stod(val);
      else if (key == "lr_decoder") o.train.lr_decoder = std::stod(val);
      else if (key == "lr_density") o.train.lr_density = std::stod(val);
      else if (key == "batch") o.train.batch = std::stoll(val);
      else if (key == "anneal_fraction") o.train.anneal_fraction = std::stod(val);
      else if (key == "seed") o.train.seed = std::stoull(val);
      else if (key == "mlp_width") o.train.mlp_width = std::stoi(val);
      else if (key == "levels") o.grid.levels = std::stoi(val);
      else if (key == "r_min") o.grid.r_min = uint32_t(std::stoul(val));
      else if (key == "r_max") o.grid.r_max = uint32_t(std::stoul(val));
      else if (key == "table_size") o.grid.table_size = uint32_t(std::stoul(val));
      else if (key == "feature_dim") o.grid.feature_dim = std::stoi(val);
      else if (key == "latent_dim") o.grid.latent_dim = std::stoi(val);
      else throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "flat key=value config file");
  cmd->add_option("--steps", o.train.steps);
  cmd->add_option("--lambda-i", o.train.lambda_i);
  cmd->add_option("--lr-mlp", o.train.lr_mlp);
  cmd->add_option("--lr-latents", o.train.lr_latents);
  cmd->add_option("--lr-decoder", o.train.lr_decoder);
  cmd->add_option("--lr-density", o.train.lr_density);
  cmd->add_option("--batch", o.train.batch, "pixels per step; 0 = full grid");
  cmd->add_option("--anneal-fraction", o.train.anneal_fraction);
  cmd->add_option("--seed", o.train.seed);
  cmd->add_option("--mlp-width", o.train.mlp_width);
  cmd->add_option("--levels", o.grid.levels);
  cmd->add_option("--min-res", o.grid.r_min);
  cmd->add_option("--max-res", o.grid.r_max);
  cmd->add_option("--table-size", o.grid.table_size);
  cmd->add_option("--feature-dim", o.grid.feature_dim);
  cmd->add_option("--latent-dim", o.grid.latent_dim);
}

void report(const std::string& key, const std::string& value) {
  std::cout << key << "=" << value << "\n";
}

std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << v;
  return os.str();
}

int cmd_encode(const Options& opts) {
  const ImageBuffer img = load_ppm(opts.input);
  report("input", opts.input);
  report("width", std::to_string(img.width));
  report("height", std::to_string(img.height));
  report("steps", std::to_string(opts.train.steps));
  report("lambda_i", fmt(opts.train.lambda_i));
  report("anneal_fraction", fmt(opts.train.anneal_fraction));
  report("seed", std::to_string(opts.train.seed));
  report("levels", std::to_string(opts.grid.levels));
  report("table_size", std::to_string(opts.grid.table_size));

  TrainResult<double> res = train<double>(img, opts.train, opts.grid);
  const std::vector<uint8_t> bytes = serialize_model(res.model);
  write_file(opts.out, bytes);
  const EvalResult ev = evaluate(res.model, img);

  report("out", opts.out);
  report("bytes", std::to_string(bytes.size()));
  report("psnr_db", fmt(ev.psnr_db));
  report("bpp", fmt(ev.bpp));
  report("est_payload_bits", fmt(res.est_payload_bits));
  report("seconds", fmt(res.seconds));
  return 0;
}

int cmd_decode(const Options& opts) {
  const std::vector<uint8_t> bytes = read_file(opts.input);
  ShaciraModel<float> m =
      opts.lod > 0 ? decode_lod_prefix(bytes, opts.lod) : deserialize_model(bytes);
  const ImageBuffer img = reconstruct(m);
  save_ppm(img, opts.out);
  report("out", opts.out);
  report("lod", std::to_string(m.active_levels));
  report("width", std::to_string(img.width));
  report("height", std::to_string(img.height));
  return 0;
}

int cmd_eval(const Options& opts) {
  const std::vector<uint8_t> bytes = read_file(opts.input);
  const ShaciraModel<float> m = deserialize_model(bytes);
  const ImageBuffer ref = load_ppm(opts.out);  // reference image
  if (ref.width != m.image_w || ref.height != m.image_h)
    throw ConfigError("eval: reference image size does not match bitstream");
  const EvalResult ev = evaluate(m, ref);
  report("bytes", std::to_string(ev.bytes));
  report("psnr_db", fmt(ev.psnr_db));
  report("bpp", fmt(ev.bpp));
  for (size_t l = 0; l < ev.per_lod_psnr.size(); ++l)
    report("psnr_lod_" + std::to_string(l + 1), fmt(ev.per_lod_psnr[l]));
  return 0;
}

int cmd_lod(const Options& opts) {
  const std::vector<uint8_t> bytes = read_file(opts.input);
  const std::vector<size_t> prefixes = prefix_sizes(bytes);
  for (size_t l = 1; l <= prefixes.size(); ++l) {
    const std::span<const uint8_t> prefix(bytes.data(), prefixes[l - 1]);
    ShaciraModel<float> m = decode_lod_prefix(prefix, int(l));
    const ImageBuffer img = reconstruct(m);
    const std::string path = opts.out + "_lod" + std::to_string(l) + ".ppm";
    save_ppm(img, path);
    report("lod_" + std::to_string(l) + "_bytes", std::to_string(prefixes[l - 1]));
    report("lod_" + std::to_string(l) + "_out", path);
  }
  return 0;
}

int cmd_sweep(const Options& opts) {
  const ImageBuffer img = load_ppm(opts.input);
  std::ofstream csv(opts.out);
  if (!csv) throw IoError("cannot write '" + opts.out + "'");
  csv.imbue(std::locale::classic());
  csv << "variant,table_size,psnr_db,bpp,seconds\n";
  int variant = 0;
  int failures = 0;
  for (uint32_t t : opts.sweep_tables) {
    Options v = opts;
    v.grid.table_size = t;
    try {
      TrainResult<double> res = train<double>(img, v.train, v.grid);
      const EvalResult ev = evaluate(res.model, img);
      csv << variant << "," << t << "," << fmt(ev.psnr_db) << "," << fmt(ev.bpp) << ","
          << fmt(res.seconds) << "\n";
    } catch (const std::exception& e) {
      std::cerr << "sweep variant " << variant << " failed: " << e.what() << "\n";
      csv << variant << "," << t << ",,,failed\n";
      ++failures;
    }
    ++variant;
  }
  report("variants", std::to_string(variant));
  report("failures", std::to_string(failures));
  report("out", opts.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shacira: compressed implicit neural image codec"};
  app.require_subcommand(1);

  Options opts;
  opts.train.seed = default_seed();

  CLI::App* encode = app.add_subcommand("encode", "fit an image and write a bitstream");
  encode->add_option("input", opts.input, "input PPM (P6) image")->required();
  encode->add_option("--out", opts.out, "output bitstream path")->required();
  add_train_flags(encode, opts);

  CLI::App* decode = app.add_subcommand("decode", "reconstruct an image from a bitstream");
  decode->add_option("input", opts.input, "input bitstream")->required();
  decode->add_option("--out", opts.out, "output PPM path")->required();
  decode->add_option("--lod", opts.lod, "decode only the first l levels");

  CLI::App* eval = app.add_subcommand("eval", "metrics of a bitstream against a reference image");
  eval->add_option("input", opts.input, "input bitstream")->required();
  eval->add_option("--ref", opts.out, "reference PPM image")->required();

  CLI::App* lod = app.add_subcommand("lod", "write one reconstruction per LOD prefix");
  lod->add_option("input", opts.input, "input bitstream")->required();
  lod->add_option("--out", opts.out, "output path stem")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "rate-distortion sweep over table sizes");
  sweep->add_option("input", opts.input, "input PPM (P6) image")->required();
  sweep->add_option("--out", opts.out, "output CSV path")->required();
  sweep->add_option("--table-sizes", opts.sweep_tables, "table sizes to sweep")->required();
  add_train_flags(sweep, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (!opts.config_path.empty()) apply_config_file(opts.config_path, opts);
    // Flags win over the config file: re-parse applies them on top.
    if (!opts.config_path.empty()) {
      try {
        app.clear();
        app.parse(argc, argv);
      } catch (const CLI::ParseError&) {
        return kExitUsage;
      }
    }
    if (encode->parsed()) return cmd_encode(opts);
    if (decode->parsed()) return cmd_decode(opts);
    if (eval->parsed()) return cmd_eval(opts);
    if (lod->parsed()) return cmd_lod(opts);
    if (sweep->parsed()) return cmd_sweep(opts);
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
