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

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.h"

namespace diffcodec {
namespace {

SemanticFeature feat(const Tensor& t) { return {Var(t), Site::kMid}; }

TEST(ScLossTest, Algebra) {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor f = Tensor::randn({2, 5, 7}, rng);
    const Tensor g = Tensor::randn({2, 5, 7}, rng);
    EXPECT_NEAR(sc_loss(feat(f), feat(f)).value().item(), -1.0, 1e-12);
    EXPECT_NEAR(sc_loss(feat(f), feat(f * -1.0)).value().item(), 1.0, 1e-12);
    const double base = sc_loss(feat(f), feat(g)).value().item();
    EXPECT_EQ(sc_loss(feat(f), feat(g * 2.0)).value().item(), base);
    EXPECT_NEAR(sc_loss(feat(g), feat(f)).value().item(), base, 1e-15);
    EXPECT_GE(base, -1.0);
    EXPECT_LE(base, 1.0);
  }
}

TEST(ScLossTest, PositiveScalingOfOnePositionKeepsItsSimilarity) {
  Rng rng(72);
  const Tensor f = Tensor::randn({1, 4, 3}, rng);
  Tensor g = Tensor::randn({1, 4, 3}, rng);
  const Tensor sim = ops::cosine_similarity_channels(Var(f), Var(g)).value();
  for (int c = 0; c < 4; ++c) g[c * 3 + 1] *= 3.7;
  const Tensor sim2 = ops::cosine_similarity_channels(Var(f), Var(g)).value();
  for (int p = 0; p < 3; ++p) EXPECT_NEAR(sim[p], sim2[p], 1e-15);
}

TEST(ScLossTest, ZeroVectorPositionIsNeutral) {
  Tensor f({1, 3, 2}, 1.0), g({1, 3, 2}, 1.0);
  for (int c = 0; c < 3; ++c) g[c * 2 + 1] = 0.0;
  // Position 0 contributes 1, position 1 contributes 0.
  EXPECT_NEAR(sc_loss(feat(f), feat(g)).value().item(), -0.5, 1e-15);
}

TEST(ScLossTest, GradientsMatchFiniteDifferences) {
  Rng rng(73);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor f = Tensor::randn({2, 4, 3}, rng);
    const Tensor g = Tensor::randn({2, 4, 3}, rng);
    const double err = testing::gradient_relative_error(
        [](const std::vector<Var>& v) {
          return sc_loss({v[0], Site::kMid}, {v[1], Site::kMid});
        },
        {f, g});
    ASSERT_LT(err, 1e-4) << "trial " << trial;
  }
}

TEST(ScLossTest, RejectsMismatches) {
  Rng rng(74);
  const Tensor f = Tensor::randn({1, 4, 3}, rng);
  EXPECT_THROW(sc_loss(feat(f), {Var(f), Site::kEnc0}), std::invalid_argument);
  EXPECT_THROW(sc_loss(feat(f), feat(Tensor({1, 4, 2}))), ShapeError);
}

class DenoiserFeatures : public ::testing::Test {
 protected:
  DenoiserFeatures() : rng_(75), unet_(config(), rng_) {}
  static UNetConfig config() {
    UNetConfig c;
    c.width0 = 8;
    c.width1 = 16;
    c.time_dim = 16;
    c.dictionary_size = 4;
    return c;
  }
  Rng rng_;
  UNet unet_;
};

TEST_F(DenoiserFeatures, DefaultsToCleanMiddleBlock) {
  const Var z(Tensor::randn({2, 4, 8, 8}, rng_));
  const SemanticFeature a = extract_semantic_features(unet_, z);
  EXPECT_EQ(a.site, Site::kMid);
  EXPECT_EQ(a.values.shape(), (Shape{2, 16, 16}));
  const Var mid = unet_.features(z, {0, 0}, {TagSet(), TagSet()}, Site::kMid);
  EXPECT_EQ(a.values.value().vec(), mid.value().vec());
  EXPECT_EQ(extract_semantic_features(unet_, z).values.value(), a.values.value());
  EXPECT_EQ(extract_semantic_features(unet_, z, Site::kEnc0).values.shape(), (Shape{2, 8, 64}));
}

TEST_F(DenoiserFeatures, NoisyVariant) {
  const NoiseSchedule s = NoiseSchedule::make(1000);
  const Var z(Tensor::randn({2, 4, 8, 8}, rng_));
  const Var zh(Tensor::randn({2, 4, 8, 8}, rng_));
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(sc_loss_noisy(unet_, z, z, 1000, s, rng_).value().item(), -1.0, 1e-12);
  }
  const double clean = sc_loss(extract_semantic_features(unet_, z),
                               extract_semantic_features(unet_, zh)).value().item();
  EXPECT_EQ(sc_loss_noisy(unet_, z, zh, 1, s, rng_).value().item(), clean);
  EXPECT_THROW(sc_loss_noisy(unet_, z, zh, 0, s, rng_), std::out_of_range);
  EXPECT_THROW(sc_loss_noisy(unet_, z, zh, 1001, s, rng_), std::out_of_range);
}

TEST(FeatureDivergenceTest, IdentityRangeAndShapeCheck) {
  Rng rng(76);
  const Tensor x = Tensor::uniform({2, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor y = x;
  for (double& v : y.data()) v = std::clamp(v + rng.uniform(-0.3, 0.3), 0.0, 1.0);
  const RandomConvPyramid pyramid;
  const auto same = feature_divergence_profile(pyramid, x, x);
  ASSERT_EQ(same.size(), 4u);
  for (const auto& [name, d] : same) EXPECT_EQ(d, 0.0) << name;
  for (const auto& [name, d] : feature_divergence_profile(pyramid, x, y)) {
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
  EXPECT_NEAR(feature_divergence(Tensor({1, 2}, {1.0, 0.0}), Tensor({1, 2}, {-1.0, 0.0})), 2.0,
              1e-15);
  EXPECT_THROW(feature_divergence_profile(pyramid, x, Tensor({2, 3, 8, 8})), ShapeError);
}

}  // namespace
}  // namespace diffcodec
