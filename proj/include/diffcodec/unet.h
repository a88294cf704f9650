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

// Two-level epsilon-prediction U-Net.
//
//   conv_in -> enc0 (w0) -> down (stride 2) -> enc1 (w1) -> mid (w1)
//           -> dec1 (concat mid, enc1) -> up -> dec0 (concat up, enc0) -> conv_out
//
// The five named sites (enc0, enc1, mid, dec1, dec0) are where control
// residuals are added and where features can be tapped. Timestep and tag
// conditioning share one embedding: MLP(sinusoid(t)) + sum of tag rows.

#ifndef DIFFCODEC_UNET_H_
#define DIFFCODEC_UNET_H_

#include <string>
#include <vector>

#include "diffcodec/layers.h"
#include "diffcodec/tagging.h"

namespace diffcodec {

enum class Site { kEnc0 = 0, kEnc1 = 1, kMid = 2, kDec1 = 3, kDec0 = 4 };
inline constexpr int kNumSites = 5;

const char* site_name(Site s);
// Throws std::invalid_argument for an unknown site id.
Site parse_site(const std::string& name);

struct UNetConfig {
  int latent_channels = 4;
  int width0 = 64;
  int width1 = 128;
  int time_dim = 128;
  int dictionary_size = 0;
};

// (N) timesteps -> (N, dim) sinusoidal features.
Tensor timestep_embedding(const std::vector<int>& t, int dim);

// Embedding path plus the encoder and middle blocks; shared in layout by the
// denoiser and the control branch that copies it.
struct UNetTrunk {
  UNetTrunk() = default;
  UNetTrunk(const UNetConfig& config, Rng& rng);

  Var embed(const std::vector<int>& t, const std::vector<TagSet>& tags) const;
  void collect(NamedParams& out, const std::string& prefix);

  int time_dim = 0;
  Linear time1, time2;
  TagConditioner tags;
  Conv2d conv_in, down;
  ResBlock enc0, enc1, mid;
};

class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& config, Rng& rng);

  const UNetConfig& config() const { return config_; }

  // Conditioning vector (N, time_dim).
  Var embed(const std::vector<int>& t, const std::vector<TagSet>& tags) const;

  // Residuals, one per site in Site order, are added when `control` is given.
  Var forward(const Var& z_t, const std::vector<int>& t, const std::vector<TagSet>& tags,
              const std::vector<Var>* control = nullptr) const;

  // Activation at `site` of a bare forward pass; evaluation stops there.
  Var features(const Var& z, const std::vector<int>& t, const std::vector<TagSet>& tags,
               Site site) const;

  // Expected (C, H, W) of the activation at a site for a latent of size h x w.
  Shape site_shape(Site site, int h, int w) const;

  void collect(NamedParams& out, const std::string& prefix);
  UNetTrunk& trunk() { return trunk_; }

 private:
  Var run(const Var& z_t, const Var& emb, const std::vector<Var>* control, int stop_site) const;

  UNetConfig config_;
  UNetTrunk trunk_;
  Conv2d up_conv_, conv_out_;
  ResBlock dec1_, dec0_;
};

}  // namespace diffcodec

#endif  // DIFFCODEC_UNET_H_
