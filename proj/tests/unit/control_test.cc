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

#include <gtest/gtest.h>

namespace diffcodec {
namespace {

UNetConfig small_config() {
  UNetConfig c;
  c.latent_channels = 4;
  c.width0 = 8;
  c.width1 = 16;
  c.time_dim = 16;
  c.dictionary_size = 12;
  return c;
}

struct Fixture {
  Fixture() : rng(61), unet(small_config(), rng), branch(unet, rng) {}
  Rng rng;
  UNet unet;
  ControlBranch branch;
};

TEST(UNetTest, OutputShapeAndSiteShapes) {
  Fixture f;
  const Var z(Tensor::randn({2, 4, 8, 8}, f.rng));
  const std::vector<int> t = {5, 900};
  const std::vector<TagSet> tags = {TagSet({1, 3}), TagSet()};
  EXPECT_EQ(f.unet.forward(z, t, tags).shape(), z.shape());
  for (int s = 0; s < kNumSites; ++s) {
    const Shape expect = f.unet.site_shape(static_cast<Site>(s), 8, 8);
    const Var feat = f.unet.features(z, t, tags, static_cast<Site>(s));
    EXPECT_EQ(feat.shape(), (Shape{2, expect[0], expect[1], expect[2]}));
  }
  EXPECT_THROW(f.unet.forward(Var(Tensor({1, 3, 8, 8})), {1}, {TagSet()}), ShapeError);
  EXPECT_THROW(parse_site("bottleneck"), std::invalid_argument);
  EXPECT_EQ(parse_site("mid"), Site::kMid);
}

TEST(UNetTest, TagsChangeTheOutput) {
  Fixture f;
  const Var z(Tensor::randn({1, 4, 8, 8}, f.rng));
  const Tensor a = f.unet.forward(z, {100}, {TagSet({2})}).value();
  const Tensor b = f.unet.forward(z, {100}, {TagSet()}).value();
  EXPECT_GT((a - b).max_abs(), 0.0);
}

TEST(ControlTest, ZeroConvsStartAtZeroAndTrunkIsCopied) {
  Fixture f;
  NamedParams zero;
  f.branch.collect_zero_convs(zero, "ctrl");
  EXPECT_EQ(zero.size(), 2u * kNumSites);
  EXPECT_EQ(f.branch.site_count(), 5);
  for (auto& [name, v] : zero) EXPECT_EQ(v->value().max_abs(), 0.0) << name;
  NamedParams base, copy;
  f.unet.trunk().collect(base, "b");
  f.branch.collect_trunk(copy, "c");
  ASSERT_EQ(base.size(), copy.size());
  for (size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].second->value(), copy[i].second->value()) << base[i].first;
    EXPECT_NE(base[i].second->node(), copy[i].second->node()) << "copy must not alias";
  }
}

TEST(ControlTest, InitialResidualsAreZeroAtEverySite) {
  Fixture f;
  const Var z_hat(Tensor::randn({2, 4, 8, 8}, f.rng));
  const Var z_t(Tensor::randn({2, 4, 8, 8}, f.rng));
  const auto res = f.branch.forward(z_hat, z_t, {3, 400}, {TagSet({1}), TagSet()});
  ASSERT_EQ(res.size(), 5u);
  for (int s = 0; s < kNumSites; ++s) {
    const Shape e = f.unet.site_shape(static_cast<Site>(s), 8, 8);
    EXPECT_EQ(res[s].shape(), (Shape{2, e[0], e[1], e[2]}));
    EXPECT_EQ(res[s].value().max_abs(), 0.0);
  }
  EXPECT_THROW(f.branch.forward(Var(Tensor({2, 4, 4, 4})), z_t, {3, 4}, {TagSet(), TagSet()}),
               ShapeError);
}

TEST(ControlTest, ZeroInitEquivalenceIsBitExact) {
  Fixture f;
  for (int trial = 0; trial < 5; ++trial) {
    const Var z_hat(Tensor::randn({2, 4, 8, 8}, f.rng, 2.0));
    const Var z_t(Tensor::randn({2, 4, 8, 8}, f.rng));
    const std::vector<int> t = {f.rng.uniform_int(0, 1000), f.rng.uniform_int(0, 1000)};
    const std::vector<TagSet> tags = {TagSet({f.rng.uniform_int(0, 11)}), TagSet()};
    const Tensor bare = f.unet.forward(z_t, t, tags).value();
    const Tensor ctrl = predict_eps(f.unet, f.branch, z_t, z_hat, t, tags).value();
    EXPECT_EQ((bare - ctrl).max_abs(), 0.0);
  }
}

TEST(ControlTest, GradientReachesAZeroConvScalar) {
  Fixture f;
  NamedParams zero;
  f.branch.collect_zero_convs(zero, "ctrl");
  const Var z_hat(Tensor::randn({1, 4, 8, 8}, f.rng));
  const Var z_t(Tensor::randn({1, 4, 8, 8}, f.rng));
  const Tensor target = Tensor::randn({1, 4, 8, 8}, f.rng);
  auto loss = [&] {
    return ops::mse(predict_eps(f.unet, f.branch, z_t, z_hat, {250}, {TagSet({4})}), Var(target));
  };
  // Every zero conv (weight and bias) of every site: analytic vs central
  // difference on one scalar.
  for (auto& [name, v] : zero) {
    backward(loss());
    ASSERT_TRUE(v->has_grad()) << name;
    const double analytic = v->grad()[0];
    for (auto& [n2, w] : zero) w->zero_grad();
    const double h = 1e-5;
    v->mutable_value()[0] += h;
    const double up = loss().value().item();
    v->mutable_value()[0] -= 2 * h;
    const double dn = loss().value().item();
    v->mutable_value()[0] += h;
    const double numeric = (up - dn) / (2 * h);
    EXPECT_LE(std::abs(analytic - numeric), 1e-4 * std::max(std::abs(numeric), 1e-8)) << name;
    EXPECT_NE(analytic, 0.0) << name;
  }
}

TEST(ControlTest, DecoderSideInjectionMattersOnceTrained) {
  Fixture f;
  NamedParams params;
  f.branch.collect(params, "ctrl");
  Adam opt(param_handles(params), {.lr = 1e-2});
  NamedParams base;
  f.unet.collect(base, "unet");
  std::vector<Tensor> before;
  for (auto& [n, v] : base) before.push_back(v->value());
  set_requires_grad(base, false);
  const Var z_hat(Tensor::randn({1, 4, 8, 8}, f.rng));
  const Var z_t(Tensor::randn({1, 4, 8, 8}, f.rng));
  const Tensor target = Tensor::randn({1, 4, 8, 8}, f.rng);
  for (int i = 0; i < 5; ++i) {
    backward(ops::mse(predict_eps(f.unet, f.branch, z_t, z_hat, {10}, {TagSet()}), Var(target)));
    opt.step();
  }
  // Frozen base stays bit-identical.
  for (size_t i = 0; i < base.size(); ++i) EXPECT_EQ(base[i].second->value(), before[i]);
  auto res = f.branch.forward(z_hat, z_t, {10}, {TagSet()});
  const Tensor full = f.unet.forward(z_t, {10}, {TagSet()}, &res).value();
  res[3] = Var(Tensor(res[3].shape(), 0.0));
  res[4] = Var(Tensor(res[4].shape(), 0.0));
  const Tensor encoder_only = f.unet.forward(z_t, {10}, {TagSet()}, &res).value();
  EXPECT_GT((full - encoder_only).max_abs(), 0.0);
}

}  // namespace
}  // namespace diffcodec
