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

// Small convolutional VAE that defines the coding latent space. Latents are
// reported in scaled units: posterior mean times a stored constant chosen so
// that training latents have unit standard deviation.

#ifndef DIFFCODEC_VAE_H_
#define DIFFCODEC_VAE_H_

#include <string>
#include <vector>

#include "diffcodec/layers.h"

namespace diffcodec {

class TensorArchive;

struct VaeConfig {
  int latent_channels = 4;
  int factor = 4;  // power of two
  int width = 32;
  double kl_weight = 1e-6;
};

class VaeModel {
 public:
  VaeModel() = default;
  VaeModel(const VaeConfig& config, Rng& rng);

  const VaeConfig& config() const { return config_; }
  int factor() const { return config_.factor; }
  int latent_channels() const { return config_.latent_channels; }
  double latent_scale() const { return latent_scale_; }
  void set_latent_scale(double s);

  struct Posterior {
    Var mean, logvar;  // unscaled
  };
  Posterior posterior(const Var& x) const;

  // Scaled posterior mean, (N, C_z, H/f, W/f).
  Var encode(const Var& x) const;
  Tensor encode(const Tensor& x) const;
  // Unclamped decoder output for training; takes scaled latents.
  Var decode_raw(const Var& z) const;
  // Image in [0, 1].
  Tensor decode(const Tensor& z) const;

  // Sets the scale to 1 / std of the unscaled posterior means of `images`.
  double calibrate_latent_scale(const Tensor& images, int batch = 16);

  void collect(NamedParams& out, const std::string& prefix);
  void save(TensorArchive& archive, const std::string& prefix);
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  void check_image(const Shape& s) const;

  VaeConfig config_;
  double latent_scale_ = 1.0;
  Conv2d enc_in_, enc_out_, dec_in_, dec_out_;
  std::vector<ResBlock> enc_blocks_, dec_blocks_;
  std::vector<Conv2d> downs_, ups_;
  ResBlock enc_mid_, dec_mid_;
};

struct VaeLoss {
  Var total;
  double reconstruction = 0.0;
  double kl = 0.0;
};

// Per-element L2 reconstruction of a reparameterized sample plus
// kl_weight * per-element KL to N(0, I). A zero weight drops the KL term.
VaeLoss vae_loss(const VaeModel& model, const Tensor& batch, Rng& rng);

// One optimizer step; returns the loss before the update.
double vae_train_step(VaeModel& model, Adam& opt, const Tensor& batch, Rng& rng);

VaeConfig read_vae_config(const TensorArchive& archive, const std::string& prefix);
void write_vae_config(const VaeConfig& config, TensorArchive& archive, const std::string& prefix);

}  // namespace diffcodec

#endif  // DIFFCODEC_VAE_H_
