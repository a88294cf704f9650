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


// Learned analysis/synthesis transforms between the coding space and the
// code tensor y, and the quantizer used in training and inference.

#ifndef DIFFCODEC_LATENT_TRANSFORMS_H_
#define DIFFCODEC_LATENT_TRANSFORMS_H_

#include <stdexcept>
#include <string>
#include <vector>

#include "diffcodec/layers.h"

namespace diffcodec {

class TensorArchive;

enum class QuantizerMode { kNoise, kRound, kSte };
QuantizerMode parse_quantizer_mode(const std::string& name);

class QuantizerModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Marks the current thread as running a training step; NOISE and STE
// quantization are only accepted inside such a scope.
class TrainingScope {
 public:
  TrainingScope();
  ~TrainingScope();
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;

 private:
  bool previous_;
};
bool in_training();

// NOISE adds U(-0.5, 0.5); ROUND rounds half away from zero; STE rounds in
// the forward pass and passes gradients through unchanged.
Var quantize(const Var& y, QuantizerMode mode, Rng* rng = nullptr);
// NOISE with caller-supplied offsets u (same shape as y).
Var quantize_with_noise(const Var& y, const Tensor& u);
Tensor quantize_round(const Tensor& y);

// Where the analysis transform reads from: the VAE latent or raw pixels.
enum class InputSpace { kLatent, kPixel };
InputSpace parse_input_space(const std::string& name);
const char* input_space_name(InputSpace s);

struct TransformConfig {
  int latent_channels = 4;  // C_z
  int code_channels = 64;   // M
  int hyper_channels = 32;  // N_h
  int width = 64;
  int vae_factor = 4;       // f; used by the pixel paths
  InputSpace input = InputSpace::kLatent;
};

class CodecTransforms {
 public:
  CodecTransforms() = default;
  CodecTransforms(const TransformConfig& config, Rng& rng);

  const TransformConfig& config() const { return config_; }
  static constexpr int kStride = 2;  // s

  // Latent (N, C_z, h, w) -> y (N, M, h/2, w/2). With pixel input the
  // argument is the image (N, 3, H, W).
  Var analysis(const Var& input) const;
  // y_hat (N, M, h', w') -> latent (N, C_z, 2h', 2w').
  Var synthesis(const Var& y_hat) const;
  // y_hat -> image (N, 3, 2f h', 2f w'); pixel-distortion variant.
  Var synthesis_pixel(const Var& y_hat) const;

  void collect(NamedParams& out, const std::string& prefix);
  void save(TensorArchive& archive, const std::string& prefix);
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  TransformConfig config_;
  std::vector<Conv2d> pixel_in_;  // extra stride-2 stages for pixel input
  Conv2d a_in_, a_down_, a_out_;
  ResBlock a0_, a1_, a2_;
  Conv2d s_in_, s_up_, s_out_;
  ResBlock s0_, s1_, s2_;
  std::vector<Conv2d> p_ups_;
  Conv2d p_out_;
};

TransformConfig read_transform_config(const TensorArchive& archive, const std::string& prefix);
void write_transform_config(const TransformConfig& c, TensorArchive& archive,
                            const std::string& prefix);

}  // namespace diffcodec

#endif  // DIFFCODEC_LATENT_TRANSFORMS_H_
