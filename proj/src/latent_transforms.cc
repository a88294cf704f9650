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


#include "diffcodec/latent_transforms.h"

#include <cmath>

#include "diffcodec/archive.h"

namespace diffcodec {

namespace {
thread_local bool g_training = false;
}  // namespace

TrainingScope::TrainingScope() : previous_(g_training) { g_training = true; }
TrainingScope::~TrainingScope() { g_training = previous_; }
bool in_training() { return g_training; }

QuantizerMode parse_quantizer_mode(const std::string& name) {
  if (name == "noise") return QuantizerMode::kNoise;
  if (name == "round") return QuantizerMode::kRound;
  if (name == "ste") return QuantizerMode::kSte;
  throw std::invalid_argument("unknown quantizer mode '" + name + "'");
}

Var quantize(const Var& y, QuantizerMode mode, Rng* rng) {
  switch (mode) {
    case QuantizerMode::kRound:
      return Var(quantize_round(y.value()));
    case QuantizerMode::kNoise: {
      if (!in_training()) throw QuantizerModeError("NOISE quantization outside training");
      if (!rng) throw std::invalid_argument("NOISE quantization needs an rng");
      return y + Var(Tensor::uniform(y.shape(), *rng, -0.5, 0.5));
    }
    case QuantizerMode::kSte:
      if (!in_training()) throw QuantizerModeError("STE quantization outside training");
      return ops::ste_round(y);
  }
  throw std::invalid_argument("bad quantizer mode");
}

Var quantize_with_noise(const Var& y, const Tensor& u) {
  if (!in_training()) throw QuantizerModeError("NOISE quantization outside training");
  if (u.shape() != y.shape()) throw ShapeError("noise shape differs from code shape");
  for (double v : u.vec()) {
    if (!(v >= -0.5 && v <= 0.5)) throw std::invalid_argument("noise offsets must be in [-0.5, 0.5]");
  }
  return y + Var(u);
}

Tensor quantize_round(const Tensor& y) {
  Tensor out = y;
  for (double& v : out.data()) v = round_half_away(v);
  return out;
}

InputSpace parse_input_space(const std::string& name) {
  if (name == "latent") return InputSpace::kLatent;
  if (name == "pixel") return InputSpace::kPixel;
  throw std::invalid_argument("unknown space '" + name + "' (expected latent or pixel)");
}

const char* input_space_name(InputSpace s) { return s == InputSpace::kLatent ? "latent" : "pixel"; }

CodecTransforms::CodecTransforms(const TransformConfig& c, Rng& rng) : config_(c) {
  const int w = c.width;
  int in = c.latent_channels;
  int levels = 0;
  while ((1 << levels) < c.vae_factor) ++levels;
  if ((1 << levels) != c.vae_factor) throw std::invalid_argument("vae_factor must be a power of two");
  if (c.input == InputSpace::kPixel) {
    in = 3;
    for (int i = 0; i < levels; ++i) {
      pixel_in_.emplace_back(in, w, 3, 2, rng);
      in = w;
    }
  }
  a_in_ = Conv2d(in, w, 3, 1, rng);
  a0_ = ResBlock(w, w, 0, rng);
  a_down_ = Conv2d(w, w, 3, kStride, rng);
  a1_ = ResBlock(w, w, 0, rng);
  a2_ = ResBlock(w, w, 0, rng);
  a_out_ = Conv2d(w, c.code_channels, 3, 1, rng);

  s_in_ = Conv2d(c.code_channels, w, 3, 1, rng);
  s0_ = ResBlock(w, w, 0, rng);
  s1_ = ResBlock(w, w, 0, rng);
  s_up_ = Conv2d(w, w, 3, 1, rng);
  s2_ = ResBlock(w, w, 0, rng);
  s_out_ = Conv2d(w, c.latent_channels, 3, 1, rng, 0.5);
  for (int i = 0; i < levels; ++i) p_ups_.emplace_back(w, w, 3, 1, rng);
  p_out_ = Conv2d(w, 3, 3, 1, rng, 0.5);
}

Var CodecTransforms::analysis(const Var& input) const {
  const Shape& s = input.shape();
  const bool pixel = config_.input == InputSpace::kPixel;
  const int channels = pixel ? 3 : config_.latent_channels;
  const int div = kStride * (pixel ? config_.vae_factor : 1);
  if (s.size() != 4 || s[1] != channels || s[2] % div || s[3] % div || s[2] == 0 || s[3] == 0) {
    throw ShapeError(std::string("analysis expects (N, ") + std::to_string(channels) +
                     ", H, W) with H, W divisible by " + std::to_string(div) + ", got " +
                     shape_string(s));
  }
  Var h = input;
  for (const Conv2d& c : pixel_in_) h = ops::silu(c.forward(h));
  h = a0_.forward(a_in_.forward(h));
  h = a2_.forward(a1_.forward(a_down_.forward(h)));
  return a_out_.forward(ops::silu(h));
}

Var CodecTransforms::synthesis(const Var& y_hat) const {
  const Shape& s = y_hat.shape();
  if (s.size() != 4 || s[1] != config_.code_channels) {
    throw ShapeError("synthesis expects (N, " + std::to_string(config_.code_channels) +
                     ", h, w), got " + shape_string(s));
  }
  Var h = s1_.forward(s0_.forward(s_in_.forward(y_hat)));
  h = s2_.forward(s_up_.forward(ops::upsample_nearest2x(h)));
  return s_out_.forward(ops::silu(h));
}

Var CodecTransforms::synthesis_pixel(const Var& y_hat) const {
  const Shape& s = y_hat.shape();
  if (s.size() != 4 || s[1] != config_.code_channels) {
    throw ShapeError("synthesis_pixel expects (N, " + std::to_string(config_.code_channels) +
                     ", h, w), got " + shape_string(s));
  }
  Var h = s1_.forward(s0_.forward(s_in_.forward(y_hat)));
  h = s2_.forward(s_up_.forward(ops::upsample_nearest2x(h)));
  for (const Conv2d& c : p_ups_) h = ops::silu(c.forward(ops::upsample_nearest2x(h)));
  return p_out_.forward(h) + 0.5;
}

void CodecTransforms::collect(NamedParams& out, const std::string& prefix) {
  for (size_t i = 0; i < pixel_in_.size(); ++i) {
    pixel_in_[i].collect(out, prefix + ".pixel_in" + std::to_string(i));
  }
  a_in_.collect(out, prefix + ".a_in");
  a0_.collect(out, prefix + ".a0");
  a_down_.collect(out, prefix + ".a_down");
  a1_.collect(out, prefix + ".a1");
  a2_.collect(out, prefix + ".a2");
  a_out_.collect(out, prefix + ".a_out");
  s_in_.collect(out, prefix + ".s_in");
  s0_.collect(out, prefix + ".s0");
  s1_.collect(out, prefix + ".s1");
  s_up_.collect(out, prefix + ".s_up");
  s2_.collect(out, prefix + ".s2");
  s_out_.collect(out, prefix + ".s_out");
  for (size_t i = 0; i < p_ups_.size(); ++i) p_ups_[i].collect(out, prefix + ".p_up" + std::to_string(i));
  p_out_.collect(out, prefix + ".p_out");
}

void CodecTransforms::save(TensorArchive& archive, const std::string& prefix) {
  write_transform_config(config_, archive, prefix);
  NamedParams p;
  collect(p, prefix);
  save_params(p, archive);
}

void CodecTransforms::load(const TensorArchive& archive, const std::string& prefix) {
  NamedParams p;
  collect(p, prefix);
  load_params(p, archive);
}

TransformConfig read_transform_config(const TensorArchive& a, const std::string& prefix) {
  TransformConfig c;
  c.latent_channels = std::stoi(a.meta(prefix + ".latent_channels"));
  c.code_channels = std::stoi(a.meta(prefix + ".code_channels"));
  c.hyper_channels = std::stoi(a.meta(prefix + ".hyper_channels"));
  c.width = std::stoi(a.meta(prefix + ".width"));
  c.vae_factor = std::stoi(a.meta(prefix + ".vae_factor"));
  c.input = parse_input_space(a.meta(prefix + ".input"));
  return c;
}

void write_transform_config(const TransformConfig& c, TensorArchive& a, const std::string& prefix) {
  a.set_meta(prefix + ".latent_channels", std::to_string(c.latent_channels));
  a.set_meta(prefix + ".code_channels", std::to_string(c.code_channels));
  a.set_meta(prefix + ".hyper_channels", std::to_string(c.hyper_channels));
  a.set_meta(prefix + ".width", std::to_string(c.width));
  a.set_meta(prefix + ".vae_factor", std::to_string(c.vae_factor));
  a.set_meta(prefix + ".input", input_space_name(c.input));
}

}  // namespace diffcodec
