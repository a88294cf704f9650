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

// Semantic consistency in denoiser feature space, and a per-layer feature
// divergence profiler for arbitrary extractors.

#ifndef DIFFCODEC_SEMANTICS_H_
#define DIFFCODEC_SEMANTICS_H_

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "diffcodec/diffusion.h"
#include "diffcodec/unet.h"

namespace diffcodec {

inline constexpr double kDefaultSemanticWeight = 2.0;

// values (N, C, P): C-dim feature vectors at P spatial positions.
struct SemanticFeature {
  Var values;
  Site site = Site::kMid;
};

// Bare denoiser activations at `site` for clean input (t = 0 by default)
// under the unconditional (EMPTY) tag condition.
SemanticFeature extract_semantic_features(const UNet& denoiser, const Var& z,
                                          Site site = Site::kMid, int t = 0);

// -(mean over items and positions of the channel-axis cosine similarity).
// Zero-vector positions contribute similarity 0.
Var sc_loss(const SemanticFeature& f, const SemanticFeature& f_hat);

// Noisy-input variant: one draw t = floor(U(0, t_max)) and eps per item,
// shared by z and z_hat, so t_max = 1 is the clean loss.
Var sc_loss_noisy(const UNet& denoiser, const Var& z, const Var& z_hat, int t_max,
                  const NoiseSchedule& schedule, Rng& rng, Site site = Site::kMid);

// Ordered named layers of a feature extractor on an image batch (N, 3, H, W).
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::pair<std::string, Tensor>> layers(const Tensor& images) const = 0;
};

// Fixed-seed random convolutional pyramid on pixels; a stand-in
// classification backbone with four stride-2 stages.
class RandomConvPyramid : public FeatureExtractor {
 public:
  explicit RandomConvPyramid(uint64_t seed = 2024, int width = 16, int stages = 4);
  std::vector<std::pair<std::string, Tensor>> layers(const Tensor& images) const override;

 private:
  std::vector<Conv2d> convs_;
};

// Denoiser sites on the latents of the images.
class DenoiserFeatureExtractor : public FeatureExtractor {
 public:
  DenoiserFeatureExtractor(const UNet& denoiser, std::function<Tensor(const Tensor&)> to_latent)
      : denoiser_(denoiser), to_latent_(std::move(to_latent)) {}
  std::vector<std::pair<std::string, Tensor>> layers(const Tensor& images) const override;

 private:
  const UNet& denoiser_;
  std::function<Tensor(const Tensor&)> to_latent_;
};

// 1 - cosine similarity of each item's globally flattened activations,
// averaged over the batch; one value in [0, 2] per layer.
std::vector<std::pair<std::string, double>> feature_divergence_profile(
    const FeatureExtractor& extractor, const Tensor& x, const Tensor& x_hat);

// Same metric for a pair of activation tensors (N, ...).
double feature_divergence(const Tensor& a, const Tensor& b);

}  // namespace diffcodec

#endif  // DIFFCODEC_SEMANTICS_H_
