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

#include "diffcodec/unet.h"

#include <cmath>

namespace diffcodec {

const char* site_name(Site s) {
  switch (s) {
    case Site::kEnc0: return "enc0";
    case Site::kEnc1: return "enc1";
    case Site::kMid: return "mid";
    case Site::kDec1: return "dec1";
    case Site::kDec0: return "dec0";
  }
  return "?";
}

Site parse_site(const std::string& name) {
  for (int i = 0; i < kNumSites; ++i) {
    if (name == site_name(static_cast<Site>(i))) return static_cast<Site>(i);
  }
  throw std::invalid_argument("unknown feature site '" + name +
                              "' (expected enc0, enc1, mid, dec1 or dec0)");
}

Tensor timestep_embedding(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  Tensor out(Shape{static_cast<int>(t.size()), dim});
  for (size_t n = 0; n < t.size(); ++n) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      out[n * dim + k] = std::sin(t[n] * freq);
      out[n * dim + half + k] = std::cos(t[n] * freq);
    }
  }
  return out;
}

UNetTrunk::UNetTrunk(const UNetConfig& c, Rng& rng) : time_dim(c.time_dim) {
  const int e = c.time_dim;
  time1 = Linear(e, e, rng);
  time2 = Linear(e, e, rng);
  tags = TagConditioner(c.dictionary_size, e, rng);
  conv_in = Conv2d(c.latent_channels, c.width0, 3, 1, rng);
  enc0 = ResBlock(c.width0, c.width0, e, rng);
  down = Conv2d(c.width0, c.width0, 3, 2, rng);
  enc1 = ResBlock(c.width0, c.width1, e, rng);
  mid = ResBlock(c.width1, c.width1, e, rng);
}

Var UNetTrunk::embed(const std::vector<int>& t, const std::vector<TagSet>& tag_sets) const {
  if (t.size() != tag_sets.size()) throw ShapeError("one timestep and one tag set per item");
  Var h = time2.forward(ops::silu(time1.forward(Var(timestep_embedding(t, time_dim)))));
  return h + tags.forward(tag_sets);
}

void UNetTrunk::collect(NamedParams& out, const std::string& prefix) {
  time1.collect(out, prefix + ".time1");
  time2.collect(out, prefix + ".time2");
  tags.collect(out, prefix + ".tags");
  conv_in.collect(out, prefix + ".conv_in");
  enc0.collect(out, prefix + ".enc0");
  down.collect(out, prefix + ".down");
  enc1.collect(out, prefix + ".enc1");
  mid.collect(out, prefix + ".mid");
}

UNet::UNet(const UNetConfig& c, Rng& rng) : config_(c), trunk_(c, rng) {
  const int e = c.time_dim;
  dec1_ = ResBlock(2 * c.width1, c.width1, e, rng);
  up_conv_ = Conv2d(c.width1, c.width0, 3, 1, rng);
  dec0_ = ResBlock(2 * c.width0, c.width0, e, rng);
  conv_out_ = Conv2d(c.width0, c.latent_channels, 3, 1, rng, 0.5);
}

Var UNet::embed(const std::vector<int>& t, const std::vector<TagSet>& tags) const {
  return trunk_.embed(t, tags);
}

Var UNet::run(const Var& z_t, const Var& emb, const std::vector<Var>* control,
              int stop_site) const {
  if (z_t.shape().size() != 4 || z_t.dim(1) != config_.latent_channels) {
    throw ShapeError("denoiser expects (N, " + std::to_string(config_.latent_channels) +
                     ", H, W) latents, got " + shape_string(z_t.shape()));
  }
  if (z_t.dim(2) % 2 || z_t.dim(3) % 2) throw ShapeError("latent H and W must be even");
  if (control && control->size() != kNumSites) {
    throw ShapeError("expected " + std::to_string(kNumSites) + " control residuals");
  }
  auto inject = [&](Var h, int site) {
    if (!control) return h;
    const Var& c = (*control)[site];
    if (c.shape() != h.shape()) {
      throw ShapeError(std::string("control residual for ") + site_name(static_cast<Site>(site)) +
                       " has shape " + shape_string(c.shape()) + ", expected " +
                       shape_string(h.shape()));
    }
    return h + c;
  };
  Var h = trunk_.conv_in.forward(z_t);
  Var e0 = inject(trunk_.enc0.forward(h, &emb), 0);
  if (stop_site == 0) return e0;
  Var e1 = inject(trunk_.enc1.forward(trunk_.down.forward(e0), &emb), 1);
  if (stop_site == 1) return e1;
  Var m = inject(trunk_.mid.forward(e1, &emb), 2);
  if (stop_site == 2) return m;
  Var u1 = inject(dec1_.forward(ops::concat_channels({m, e1}), &emb), 3);
  if (stop_site == 3) return u1;
  Var up = up_conv_.forward(ops::upsample_nearest2x(u1));
  Var u0 = inject(dec0_.forward(ops::concat_channels({up, e0}), &emb), 4);
  if (stop_site == 4) return u0;
  return conv_out_.forward(ops::silu(u0));
}

Var UNet::forward(const Var& z_t, const std::vector<int>& t, const std::vector<TagSet>& tags,
                  const std::vector<Var>* control) const {
  return run(z_t, embed(t, tags), control, -1);
}

Var UNet::features(const Var& z, const std::vector<int>& t, const std::vector<TagSet>& tags,
                   Site site) const {
  return run(z, embed(t, tags), nullptr, static_cast<int>(site));
}

Shape UNet::site_shape(Site site, int h, int w) const {
  switch (site) {
    case Site::kEnc0:
    case Site::kDec0: return {config_.width0, h, w};
    default: return {config_.width1, h / 2, w / 2};
  }
}

void UNet::collect(NamedParams& out, const std::string& prefix) {
  trunk_.collect(out, prefix);
  dec1_.collect(out, prefix + ".dec1");
  up_conv_.collect(out, prefix + ".up");
  dec0_.collect(out, prefix + ".dec0");
  conv_out_.collect(out, prefix + ".conv_out");
}

}  // namespace diffcodec
