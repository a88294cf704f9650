/* Copyright 2026 The diffcodec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


// diffcodec command line: train, encode, decode, eval, analyze-features.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "diffcodec/archive.h"
#include "diffcodec/image_io.h"
#include "diffcodec/pipeline.h"
#include "diffcodec/semantics.h"
#include "diffcodec/training.h"

namespace fs = std::filesystem;
using namespace diffcodec;

namespace {

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::unique_ptr<CodecModel> load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
  return CodecModel::load(path);
}

int cmd_train(const std::string& config_path, const std::string& stage, long long seed) {
  Config c = Config::load(config_path);
  if (seed >= 0) c.set("seed", std::to_string(seed));
  const PipelineConfig cfg = PipelineConfig::from(c);
  const auto reports = run_stage(cfg, stage);
  for (const StageReport& r : reports) {
    std::cout << r.stage << ": " << r.losses.size() << " iterations in " << num(r.seconds, "%.1f")
              << "s";
    if (!r.losses.empty()) std::cout << ", last loss " << num(r.losses.back());
    if (r.initial_validation != 0.0 || r.final_validation != 0.0) {
      std::cout << ", validation " << num(r.initial_validation) << " -> "
                << num(r.final_validation);
    }
    for (const auto& [k, v] : r.extra) std::cout << ", " << k << " " << num(v, "%.4f");
    std::cout << "\n";
  }
  return 0;
}

int cmd_encode(const std::string& in, const std::string& out, int quality, const std::string& ckpt) {
  const auto m = load_checkpoint(ckpt);
  if (m->quality != quality) {
    throw CheckpointMismatch("--quality " + std::to_string(quality) + " but " + ckpt +
                             " holds quality " + std::to_string(m->quality));
  }
  const Tensor x = read_image(in);
  const auto t0 = std::chrono::steady_clock::now();
  const EncodeResult r = encode_image(*m, x);
  const double secs = since(t0);
  write_file(out, r.bytes);
  std::cout << out << ": " << r.bytes.size() << " bytes, "
            << num(bits_per_pixel(r.bytes.size(), x.dim(2), x.dim(3)), "%.4f") << " bpp, tags ["
            << r.tags.to_string(&m->dictionary) << "], " << num(secs, "%.3f") << "s\n";
  return 0;
}

int cmd_decode(const std::string& in, const std::string& out, const SamplingOptions& opts,
               const std::string& ckpt) {
  const auto m = load_checkpoint(ckpt);
  const std::vector<uint8_t> bytes = read_file(in);
  const auto t0 = std::chrono::steady_clock::now();
  const DecodeResult r = decode_image(*m, bytes, opts);
  const double secs = since(t0);
  write_image(out, r.image);
  std::cout << out << ": " << r.image.dim(3) << "x" << r.image.dim(2) << ", tags ["
            << r.tags.to_string(&m->dictionary) << "], " << r.evaluations
            << " denoiser evaluations, " << num(secs, "%.3f") << "s\n";
  return 0;
}

int cmd_eval(const std::string& dir, const std::string& ckpt, const std::string& csv,
             const SamplingOptions& opts, const std::string& recon_dir) {
  const auto m = load_checkpoint(ckpt);
  if (!recon_dir.empty()) fs::create_directories(recon_dir);
  std::ofstream f(csv);
  if (!f) throw std::runtime_error("cannot write " + csv);
  f << "image,width,height,bytes,bpp,psnr_db,latent_mse,encode_s,decode_s,tags\n";
  double bpp_sum = 0, mse_sum = 0;
  int count = 0;
  for (const std::string& path : list_images(dir)) {
    const Tensor x = read_image(path);
    if (x.dim(2) % m->size_multiple() || x.dim(3) % m->size_multiple()) {
      std::cerr << "warning: skipping " << path << " (sides must be multiples of "
                << m->size_multiple() << ")\n";
      continue;
    }
    auto t0 = std::chrono::steady_clock::now();
    const EncodeResult e = encode_image(*m, x);
    Metrics mt;
    mt.encode_seconds = since(t0);
    t0 = std::chrono::steady_clock::now();
    const DecodeResult d = decode_image(*m, e.bytes, opts);
    mt.decode_seconds = since(t0);
    const Metrics base = metrics(x, d.image, e.bytes);
    mt.psnr_db = base.psnr_db;
    mt.bpp = base.bpp;
    mt.latent_mse = mse(e.latents.z, d.z_hat);
    if (!recon_dir.empty()) {
      write_image((fs::path(recon_dir) / fs::path(path).filename()).string(), d.image);
    }
    f << csv_field(fs::path(path).filename().string()) << "," << x.dim(3) << "," << x.dim(2) << ","
      << e.bytes.size() << "," << num(mt.bpp) << "," << format_psnr(mt.psnr_db) << ","
      << num(mt.latent_mse, "%.8f") << "," << num(mt.encode_seconds, "%.4f") << ","
      << num(mt.decode_seconds, "%.4f") << "," << csv_field(d.tags.to_string(&m->dictionary))
      << "\n";
    bpp_sum += mt.bpp;
    mse_sum += mt.latent_mse;
    ++count;
  }
  if (count == 0) throw std::runtime_error("no usable images in " + dir);
  std::cout << count << " images, mean bpp " << num(bpp_sum / count, "%.4f")
            << ", mean latent MSE " << num(mse_sum / count, "%.6f") << " -> " << csv << "\n";
  return 0;
}

int cmd_analyze(const std::string& orig, const std::string& recon, const std::string& csv,
                const std::string& ckpt) {
  std::map<std::string, std::string> recon_by_stem;
  for (const std::string& p : list_images(recon)) recon_by_stem[fs::path(p).stem().string()] = p;
  std::unique_ptr<CodecModel> m;
  if (!ckpt.empty()) m = load_checkpoint(ckpt);
  const RandomConvPyramid pyramid;
  std::vector<std::pair<std::string, double>> total;
  int pairs = 0;
  auto accumulate = [&](const std::vector<std::pair<std::string, double>>& prof, size_t offset) {
    for (size_t i = 0; i < prof.size(); ++i) {
      if (total.size() <= offset + i) total.emplace_back(prof[i].first, 0.0);
      total[offset + i].second += prof[i].second;
    }
  };
  for (const std::string& p : list_images(orig)) {
    auto it = recon_by_stem.find(fs::path(p).stem().string());
    if (it == recon_by_stem.end()) {
      std::cerr << "warning: no reconstruction for " << p << "\n";
      continue;
    }
    const Tensor x = read_image(p), xh = read_image(it->second);
    auto prof = feature_divergence_profile(pyramid, x, xh);
    const size_t base = prof.size();
    accumulate(prof, 0);
    if (m) {
      const DenoiserFeatureExtractor den(m->denoiser, [&](const Tensor& img) { return m->vae.encode(img); });
      auto dp = feature_divergence_profile(den, x, xh);
      for (auto& [name, v] : dp) name = "denoiser." + name;
      accumulate(dp, base);
    }
    ++pairs;
  }
  if (pairs == 0) throw std::runtime_error("no matching image pairs between " + orig + " and " + recon);
  std::ofstream f(csv);
  if (!f) throw std::runtime_error("cannot write " + csv);
  f << "layer_id,divergence\n";
  for (const auto& [name, v] : total) f << name << "," << num(v / pairs, "%.8f") << "\n";
  std::cout << pairs << " image pairs, " << total.size() << " layers -> " << csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffcodec: diffusion-conditioned generative image codec"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run a training stage");
  std::string config_path, stage;
  long long seed = -1;
  train->add_option("--config", config_path, "Key-value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--stage", stage, "vae | tagger | denoiser | prereq | 1 | 2 | all")->required();
  train->add_option("--seed", seed, "Seed (overrides the config)");

  auto* enc = app.add_subcommand("encode", "Compress an image");
  std::string in, out, ckpt;
  int quality = 0;
  enc->add_option("-i,--input", in, "PNG or PPM image")->required()->check(CLI::ExistingFile);
  enc->add_option("-o,--output", out, "Output .dicmh stream")->required();
  enc->add_option("--quality", quality, "Quality index")->required()->check(CLI::Range(0, 4));
  enc->add_option("--ckpt", ckpt, "Checkpoint for this quality")->required();

  auto* dec = app.add_subcommand("decode", "Reconstruct an image");
  SamplingOptions opts;
  long long dec_seed = 0;
  dec->add_option("-i,--input", in, "Input .dicmh stream")->required()->check(CLI::ExistingFile);
  dec->add_option("-o,--output", out, "Output PNG or PPM")->required();
  dec->add_option("--steps", opts.steps, "DDIM steps")->check(CLI::PositiveNumber);
  dec->add_option("--cfg-scale", opts.cfg_scale, "Classifier-free guidance scale");
  dec->add_option("--seed", dec_seed, "Sampling seed")->check(CLI::NonNegativeNumber);
  dec->add_option("--ckpt", ckpt, "Checkpoint matching the stream quality")->required();

  auto* ev = app.add_subcommand("eval", "Encode and decode a folder, write per-image metrics");
  std::string dir, csv, recon_dir;
  ev->add_option("--dir", dir, "Image folder")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--csv", csv, "Output CSV")->required();
  ev->add_option("--steps", opts.steps, "DDIM steps")->check(CLI::PositiveNumber);
  ev->add_option("--cfg-scale", opts.cfg_scale, "Classifier-free guidance scale");
  ev->add_option("--seed", dec_seed, "Sampling seed")->check(CLI::NonNegativeNumber);
  ev->add_option("--recon-dir", recon_dir, "Also write reconstructions here");

  auto* an = app.add_subcommand("analyze-features", "Per-layer feature divergence profile");
  std::string orig, recon;
  an->add_option("--orig", orig, "Original images")->required()->check(CLI::ExistingDirectory);
  an->add_option("--recon", recon, "Reconstructions (matched by file stem)")->required()->check(CLI::ExistingDirectory);
  an->add_option("--csv", csv, "Output CSV")->required();
  an->add_option("--ckpt", ckpt, "Also profile denoiser sites of this checkpoint");

  CLI11_PARSE(app, argc, argv);
  opts.seed = static_cast<uint64_t>(dec_seed);
  try {
    if (*train) return cmd_train(config_path, stage, seed);
    if (*enc) return cmd_encode(in, out, quality, ckpt);
    if (*dec) return cmd_decode(in, out, opts, ckpt);
    if (*ev) return cmd_eval(dir, ckpt, csv, opts, recon_dir);
    if (*an) return cmd_analyze(orig, recon, csv, ckpt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
