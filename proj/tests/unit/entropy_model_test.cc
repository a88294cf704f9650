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

#include "diffcodec/entropy_model.h"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.h"

namespace diffcodec {
namespace {

using testing::gradient_relative_error;

TEST(RateGaussianTest, UnitNormalAtZero) {
  // Phi(0.5) = 0.691462; P = 2 * 0.691462 - 1 = 0.382925; -log2 P = 1.38486.
  const RateEstimate r = rate_gaussian(Tensor({1}, 0.0), Tensor({1}, 0.0), Tensor({1}, 1.0));
  EXPECT_NEAR(r.total_bits, 1.3851, 1e-3);
  EXPECT_NEAR(r.total_bits, 1.38486, 1e-5);
}

TEST(RateGaussianTest, ConcentratedScaleCostsAlmostNothing) {
  const RateEstimate r = rate_gaussian(Tensor({1}, 2.0), Tensor({1}, 2.0), Tensor({1}, kScaleMin));
  EXPECT_LE(r.total_bits, 0.01);
  EXPECT_GE(r.total_bits, 0.0);
}

TEST(RateGaussianTest, FarOutlierHitsTheFloor) {
  const RateEstimate r = rate_gaussian(Tensor({1}, 200.0), Tensor({1}, 0.0), Tensor({1}, kScaleMin));
  EXPECT_DOUBLE_EQ(r.total_bits, 24.0);
}

TEST(RateGaussianTest, RateIsAdditive) {
  Rng rng(21);
  const Tensor v = Tensor::randn({10}, rng, 3.0), m = Tensor::randn({10}, rng);
  const Tensor s = Tensor::uniform({10}, rng, 0.2, 4.0);
  const Tensor v1 = Tensor({4}, {v[0], v[1], v[2], v[3]});
  const Tensor v2 = Tensor({6}, {v[4], v[5], v[6], v[7], v[8], v[9]});
  const Tensor m1 = Tensor({4}, {m[0], m[1], m[2], m[3]});
  const Tensor m2 = Tensor({6}, {m[4], m[5], m[6], m[7], m[8], m[9]});
  const Tensor s1 = Tensor({4}, {s[0], s[1], s[2], s[3]});
  const Tensor s2 = Tensor({6}, {s[4], s[5], s[6], s[7], s[8], s[9]});
  EXPECT_NEAR(rate_gaussian(v, m, s).total_bits,
              rate_gaussian(v1, m1, s1).total_bits + rate_gaussian(v2, m2, s2).total_bits, 1e-9);
}

TEST(RateGaussianTest, GradientsMatchFiniteDifferences) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    // Stay clear of the likelihood floor, where the gradient is deliberately
    // passed through and the function itself is flat.
    const Tensor m = Tensor::randn({12}, rng);
    const Tensor s = Tensor::uniform({12}, rng, 0.3, 3.0);
    Tensor v = Tensor::randn({12}, rng, 1.5);
    for (size_t i = 0; i < v.size(); ++i) v[i] = m[i] + s[i] * v[i];
    EXPECT_LT(gradient_relative_error(
                  [](const std::vector<Var>& x) { return gaussian_bits(x[0], x[1], x[2]); },
                  {v, m, s}),
              1e-4);
  }
}

TEST(FactorizedPriorTest, CdfIsMonotoneWithUnitLimits) {
  Rng rng(23);
  FactorizedPrior prior(4, rng);
  for (int c = 0; c < 4; ++c) {
    double prev = 0.0;
    for (double x = -60; x <= 60; x += 0.25) {
      const double v = prior.cdf(c, x);
      EXPECT_GE(v, prev);
      prev = v;
    }
    EXPECT_LT(prior.cdf(c, -1e4), 1e-9);
    EXPECT_GT(prior.cdf(c, 1e4), 1.0 - 1e-9);
  }
}

TEST(FactorizedPriorTest, RateNonNegativeAndGradientMatchesFiniteDifferences) {
  Rng rng(24);
  FactorizedPrior prior(3, rng);
  const Tensor values = Tensor::randn({2, 3, 2, 2}, rng, 2.0);
  EXPECT_GE(rate_factorized(values, prior).total_bits, 0.0);

  NamedParams params;
  prior.collect(params, "prior");
  // Perturb every prior parameter away from its symmetric initialization.
  for (auto& [name, v] : params) {
    for (double& x : v->mutable_value().data()) x += rng.uniform(-0.3, 0.3);
  }
  std::vector<Tensor> inputs = {values};
  for (auto& [name, v] : params) inputs.push_back(v->value());
  const double err = gradient_relative_error(
      [&](const std::vector<Var>& x) {
        std::vector<Var> saved;
        for (size_t i = 0; i < params.size(); ++i) {
          saved.push_back(*params[i].second);
          *params[i].second = x[i + 1];
        }
        Var bits = prior.bits(x[0]);
        for (size_t i = 0; i < params.size(); ++i) *params[i].second = saved[i];
        return bits;
      },
      inputs);
  EXPECT_LT(err, 1e-4);
}

TEST(FactorizedPriorTest, TablesAreValidAndCodeLosslessly) {
  Rng rng(25);
  FactorizedPrior prior(5, rng);
  const auto tables = prior.build_tables();
  ASSERT_EQ(tables.size(), 5u);
  std::vector<int> symbols, indexes;
  for (int i = 0; i < 2000; ++i) {
    indexes.push_back(i % 5);
    symbols.push_back(static_cast<int>(std::round(rng.normal() * 3)));
  }
  for (const auto& t : tables) EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(range_decode(range_encode(symbols, tables, indexes), symbols.size(), tables, indexes),
            symbols);
}

TEST(UniformTableTest, EachSymbolCostsLogOfSupport) {
  for (int k : {1, 3, 10, 100}) {
    const std::vector<double> pmf(2 * k + 1, 1.0);
    const CdfTable t = quantize_pmf(-k, pmf, false);
    for (int v = -k; v <= k; v += k) EXPECT_NEAR(t.cost_bits(v), std::log2(2.0 * k + 1), 0.01);
  }
}

TEST(HyperpriorTest, ShapesClampAndDeterminism) {
  Rng rng(26);
  Hyperprior hyper(64, 32, rng);
  const Var y(Tensor::randn({1, 64, 8, 8}, rng, 3.0));
  const Var zh = hyper.analysis(y);
  EXPECT_EQ(zh.shape(), (Shape{1, 32, 4, 4}));
  const GaussianParams p = hyper.synthesis(ops::ste_round(zh));
  EXPECT_EQ(p.mean.shape(), (Shape{1, 64, 8, 8}));
  EXPECT_EQ(p.scale.shape(), (Shape{1, 64, 8, 8}));
  for (double s : p.scale.value().vec()) EXPECT_GE(s, kScaleMin);
  EXPECT_EQ(hyper.analysis(y).value(), zh.value());
  EXPECT_THROW(hyper.analysis(Var(Tensor({1, 63, 8, 8}))), ShapeError);
}

}  // namespace
}  // namespace diffcodec
