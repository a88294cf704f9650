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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "diffcodec/archive.h"

namespace diffcodec {
namespace {

// Asymptotic Kolmogorov distribution tail with the Stephens correction.
double ks_p_value(double d, size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

TEST(QuantizeTest, RoundingRule) {
  const Tensor y({5}, {2.4, -1.5, 1.5, 0.5, -0.49});
  const Tensor q = quantize_round(y);
  EXPECT_EQ(q.vec(), (std::vector<double>{2.0, -2.0, 2.0, 1.0, -0.0}));
  EXPECT_EQ(quantize_round(q), q);
  EXPECT_EQ(quantize(Var(y), QuantizerMode::kRound).value(), q);
}

TEST(QuantizeTest, TrainingOnlyModes) {
  Rng rng(91);
  const Var y(Tensor::randn({2, 3}, rng));
  EXPECT_THROW(quantize(y, QuantizerMode::kNoise, &rng), QuantizerModeError);
  EXPECT_THROW(quantize(y, QuantizerMode::kSte), QuantizerModeError);
  {
    TrainingScope scope;
    EXPECT_TRUE(in_training());
    EXPECT_NO_THROW(quantize(y, QuantizerMode::kSte));
  }
  EXPECT_FALSE(in_training());
  EXPECT_THROW(parse_quantizer_mode("floor"), std::invalid_argument);
}

TEST(QuantizeTest, NoiseIsBoundedAndUniform) {
  TrainingScope scope;
  Rng rng(92);
  const Tensor y = Tensor::randn({1, 100000}, rng, 3.0);
  EXPECT_EQ(quantize_with_noise(Var(y), Tensor(y.shape(), 0.0)).value(), y);
  const Tensor out = quantize(Var(y), QuantizerMode::kNoise, &rng).value();
  std::vector<double> u(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    u[i] = out[i] - y[i];
    ASSERT_LE(std::abs(u[i]), 0.5 + 1e-12);
  }
  std::sort(u.begin(), u.end());
  double d = 0.0;
  const double n = static_cast<double>(u.size());
  for (size_t i = 0; i < u.size(); ++i) {
    const double f = u[i] + 0.5;
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  EXPECT_GT(ks_p_value(d, u.size()), 0.01) << "KS statistic " << d;
}

TEST(QuantizeTest, SteForwardIsRoundAndGradientIsIdentity) {
  TrainingScope scope;
  Rng rng(93);
  const Var y(Tensor::randn({3, 4}, rng, 2.0), true);
  const Var q = quantize(y, QuantizerMode::kSte);
  EXPECT_EQ(q.value(), quantize_round(y.value()));
  backward(ops::sum(q));
  for (double g : y.grad().vec()) EXPECT_EQ(g, 1.0);
}

TransformConfig config(InputSpace space = InputSpace::kLatent) {
  return {.latent_channels = 4, .code_channels = 64, .hyper_channels = 32, .width = 8,
          .vae_factor = 4, .input = space};
}

TEST(TransformsTest, ShapeContracts) {
  Rng rng(94);
  CodecTransforms t(config(), rng);
  const Var z(Tensor::randn({1, 4, 16, 16}, rng));
  const Var y = t.analysis(z);
  EXPECT_EQ(y.shape(), (Shape{1, 64, 8, 8}));
  EXPECT_EQ(t.analysis(z).value(), y.value());
  for (double v : y.value().vec()) ASSERT_TRUE(std::isfinite(v));
  const Var yh(quantize_round(y.value()));
  EXPECT_EQ(t.synthesis(yh).shape(), z.shape());
  EXPECT_EQ(t.synthesis(yh).value(), t.synthesis(yh).value());
  EXPECT_EQ(t.synthesis_pixel(yh).shape(), (Shape{1, 3, 64, 64}));
  EXPECT_THROW(t.analysis(Var(Tensor({1, 4, 15, 16}))), ShapeError);
  EXPECT_THROW(t.analysis(Var(Tensor({1, 3, 16, 16}))), ShapeError);
  EXPECT_THROW(t.synthesis(Var(Tensor({1, 63, 8, 8}))), ShapeError);

  CodecTransforms px(config(InputSpace::kPixel), rng);
  EXPECT_EQ(px.analysis(Var(Tensor({1, 3, 64, 64}, 0.5))).shape(), (Shape{1, 64, 8, 8}));
  EXPECT_THROW(px.analysis(Var(Tensor({1, 3, 60, 64}))), ShapeError);
}

TEST(TransformsTest, CheckpointRoundTrip) {
  Rng rng(95);
  CodecTransforms t(config(InputSpace::kPixel), rng);
  TensorArchive ar;
  t.save(ar, "codec");
  Rng other(1);
  CodecTransforms back(read_transform_config(ar, "codec"), other);
  back.load(ar, "codec");
  const Var x(Tensor::uniform({1, 3, 32, 32}, rng, 0, 1));
  EXPECT_EQ(back.analysis(x).value(), t.analysis(x).value());
  EXPECT_EQ(back.config().input, InputSpace::kPixel);
}

}  // namespace
}  // namespace diffcodec
