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

// Control branch: a trainable copy of the denoiser trunk that reads the
// decoded latent through a stride-1 entry convolution and feeds residuals
// back through zero-initialized 1x1 convolutions.
//
//   site   residual source        target
//   enc0   copy of enc0           denoiser enc0 output
//   enc1   copy of enc1           denoiser enc1 output
//   mid    copy of mid            denoiser mid output
//   dec1   copy of enc1           denoiser dec1 output
//   dec0   copy of enc0           denoiser dec0 output
//
// The first three reach the encoder pathway, the last two the decoder.

#ifndef DIFFCODEC_CONTROL_H_
#define DIFFCODEC_CONTROL_H_

#include <string>
#include <vector>

#include "diffcodec/unet.h"

namespace diffcodec {

class ControlBranch {
 public:
  ControlBranch() = default;
  // Trunk weights are copied from `base`; zero convolutions start at 0.
  ControlBranch(UNet& base, Rng& rng);

  // One residual per site, in Site order. z_hat must match z_t in shape.
  std::vector<Var> forward(const Var& z_hat, const Var& z_t, const std::vector<int>& t,
                           const std::vector<TagSet>& tags) const;

  void collect(NamedParams& out, const std::string& prefix);
  void collect_zero_convs(NamedParams& out, const std::string& prefix);
  void collect_trunk(NamedParams& out, const std::string& prefix) { trunk_.collect(out, prefix); }
  int site_count() const { return static_cast<int>(zero_.size()); }

 private:
  UNetTrunk trunk_;
  Conv2d entry_;
  std::vector<Conv2d> zero_;
};

// Denoiser output with control residuals added at every site.
Var predict_eps(const UNet& denoiser, const ControlBranch& branch, const Var& z_t,
                const Var& z_hat, const std::vector<int>& t, const std::vector<TagSet>& tags);

}  // namespace diffcodec

#endif  // DIFFCODEC_CONTROL_H_
