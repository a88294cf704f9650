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

#include "diffcodec/semantics.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diffcodec {

SemanticFeature extract_semantic_features(const UNet& denoiser, const Var& z, Site site, int t) {
  const int n = z.dim(0);
  const Var f = denoiser.features(z, std::vector<int>(n, t), std::vector<TagSet>(n), site);
  return {ops::reshape(f, {n, f.dim(1), f.dim(2) * f.dim(3)}), site};
}

Var sc_loss(const SemanticFeature& f, const SemanticFeature& f_hat) {
  if (f.site != f_hat.site) {
    throw std::invalid_argument(std::string("semantic features from different sites: ") +
                                site_name(f.site) + " vs " + site_name(f_hat.site));
  }
  return ops::neg(ops::mean(ops::cosine_similarity_channels(f.values, f_hat.values)));
}

Var sc_loss_noisy(const UNet& denoiser, const Var& z, const Var& z_hat, int t_max,
                  const NoiseSchedule& schedule, Rng& rng, Site site) {
  if (t_max < 1 || t_max > schedule.T) {
    throw std::out_of_range("t_max " + std::to_string(t_max) + " outside (0, " +
                            std::to_string(schedule.T) + "]");
  }
  if (z.shape() != z_hat.shape()) throw ShapeError("sc_loss_noisy: latent shapes differ");
  std::vector<int> t(z.dim(0));
  for (int& ti : t) ti = std::min(t_max - 1, static_cast<int>(std::floor(rng.uniform(0, t_max))));
  const Tensor eps = Tensor::randn(z.shape(), rng);
  const Var zt = add_noise(z, t, eps, schedule);
  const Var zt_hat = add_noise(z_hat, t, eps, schedule);
  const int n = z.dim(0);
  auto feats = [&](const Var& x) {
    const Var f = denoiser.features(x, t, std::vector<TagSet>(n), site);
    return SemanticFeature{ops::reshape(f, {n, f.dim(1), f.dim(2) * f.dim(3)}), site};
  };
  return sc_loss(feats(zt), feats(zt_hat));
}

RandomConvPyramid::RandomConvPyramid(uint64_t seed, int width, int stages) {
  Rng rng(seed);
  int in = 3;
  for (int s = 0; s < stages; ++s) {
    const int out = width << s;
    convs_.emplace_back(in, out, 3, 2, rng);
    in = out;
  }
}

std::vector<std::pair<std::string, Tensor>> RandomConvPyramid::layers(const Tensor& images) const {
  NoGradGuard guard;
  std::vector<std::pair<std::string, Tensor>> out;
  Var h(images);
  for (size_t s = 0; s < convs_.size(); ++s) {
    if (h.dim(2) < 2 || h.dim(3) < 2) break;
    h = ops::silu(convs_[s].forward(h));
    out.emplace_back("stage" + std::to_string(s + 1), h.value());
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> DenoiserFeatureExtractor::layers(
    const Tensor& images) const {
  NoGradGuard guard;
  const Var z(to_latent_(images));
  std::vector<std::pair<std::string, Tensor>> out;
  for (int s = 0; s < kNumSites; ++s) {
    const int n = z.dim(0);
    out.emplace_back(site_name(static_cast<Site>(s)),
                     denoiser_.features(z, std::vector<int>(n, 0), std::vector<TagSet>(n),
                                        static_cast<Site>(s))
                         .value());
  }
  return out;
}

double feature_divergence(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("feature shapes differ: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const int n = a.dim(0);
  const size_t per = a.size() / n;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double dot = 0, na = 0, nb = 0;
    bool same = true;
    for (size_t j = i * per; j < (i + 1) * per; ++j) {
      dot += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
      same = same && a[j] == b[j];
    }
    const double cos = same ? 1.0 : dot / std::max(std::sqrt(na * nb), 1e-8);
    total += std::clamp(1.0 - cos, 0.0, 2.0);
  }
  return total / n;
}

std::vector<std::pair<std::string, double>> feature_divergence_profile(
    const FeatureExtractor& extractor, const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw ShapeError("image shapes differ: " + shape_string(x.shape()) + " vs " +
                     shape_string(x_hat.shape()));
  }
  const auto fa = extractor.layers(x);
  const auto fb = extractor.layers(x_hat);
  std::vector<std::pair<std::string, double>> out;
  for (size_t i = 0; i < fa.size(); ++i) {
    out.emplace_back(fa[i].first, feature_divergence(fa[i].second, fb[i].second));
  }
  return out;
}

}  // namespace diffcodec
