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

#include "diffcodec/control.h"

namespace diffcodec {

ControlBranch::ControlBranch(UNet& base, Rng& rng) {
  const UNetConfig& c = base.config();
  trunk_ = UNetTrunk(c, rng);
  NamedParams from, to;
  base.trunk().collect(from, "base");
  trunk_.collect(to, "ctrl");
  copy_param_values(from, to);
  entry_ = Conv2d(c.latent_channels, c.width0, 3, 1, rng);
  zero_ = {Conv2d::zeros(c.width0, c.width0, 1), Conv2d::zeros(c.width1, c.width1, 1),
           Conv2d::zeros(c.width1, c.width1, 1), Conv2d::zeros(c.width1, c.width1, 1),
           Conv2d::zeros(c.width0, c.width0, 1)};
}

std::vector<Var> ControlBranch::forward(const Var& z_hat, const Var& z_t,
                                        const std::vector<int>& t,
                                        const std::vector<TagSet>& tags) const {
  if (z_hat.shape() != z_t.shape()) {
    throw ShapeError("control input " + shape_string(z_hat.shape()) +
                     " does not match the noisy latent " + shape_string(z_t.shape()));
  }
  const Var emb = trunk_.embed(t, tags);
  const Var h = trunk_.conv_in.forward(z_t) + entry_.forward(z_hat);
  const Var e0 = trunk_.enc0.forward(h, &emb);
  const Var e1 = trunk_.enc1.forward(trunk_.down.forward(e0), &emb);
  const Var m = trunk_.mid.forward(e1, &emb);
  return {zero_[0].forward(e0), zero_[1].forward(e1), zero_[2].forward(m), zero_[3].forward(e1),
          zero_[4].forward(e0)};
}

void ControlBranch::collect_zero_convs(NamedParams& out, const std::string& prefix) {
  for (int i = 0; i < static_cast<int>(zero_.size()); ++i) {
    zero_[i].collect(out, prefix + ".zero_" + site_name(static_cast<Site>(i)));
  }
}

void ControlBranch::collect(NamedParams& out, const std::string& prefix) {
  trunk_.collect(out, prefix);
  entry_.collect(out, prefix + ".entry");
  collect_zero_convs(out, prefix);
}

Var predict_eps(const UNet& denoiser, const ControlBranch& branch, const Var& z_t,
                const Var& z_hat, const std::vector<int>& t, const std::vector<TagSet>& tags) {
  const std::vector<Var> residuals = branch.forward(z_hat, z_t, t, tags);
  return denoiser.forward(z_t, t, tags, &residuals);
}

}  // namespace diffcodec
