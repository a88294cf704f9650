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

#include "diffcodec/diffusion.h"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.h"

namespace diffcodec {
namespace {

TEST(ScheduleTest, ConventionsAndTerminalValue) {
  const NoiseSchedule s = NoiseSchedule::make(1000);
  EXPECT_EQ(s.abar(0), 1.0);
  for (int t = 1; t <= s.T; ++t) {
    EXPECT_GT(s.beta[t], 0.0);
    EXPECT_LT(s.beta[t], 1.0);
    EXPECT_LT(s.abar(t), s.abar(t - 1));
  }
  EXPECT_NEAR(s.beta[1], 8.5e-4, 1e-15);
  EXPECT_NEAR(s.beta[1000], 1.2e-2, 1e-15);
  // Product of (1 - beta) over the scaled-linear ramp, evaluated in numpy.
  EXPECT_NEAR(s.abar(1000), 0.004660098513077238, 1e-13);
  EXPECT_LT(s.abar(1000), 0.01);
  EXPECT_THROW(NoiseSchedule::make(0), std::invalid_argument);
  EXPECT_THROW(s.abar(1001), std::out_of_range);
}

TEST(AddNoiseTest, IdentityAtZeroAndScalingWithoutNoise) {
  Rng rng(51);
  const NoiseSchedule s = NoiseSchedule::make(1000);
  const Tensor z0 = Tensor::randn({2, 4, 3, 3}, rng);
  const Tensor eps = Tensor::randn(z0.shape(), rng);
  EXPECT_EQ(add_noise(z0, {0, 0}, eps, s), z0);
  const Tensor zt = add_noise(z0, {10, 500}, Tensor(z0.shape(), 0.0), s);
  for (size_t i = 0; i < 36; ++i) EXPECT_DOUBLE_EQ(zt[i], std::sqrt(s.abar(10)) * z0[i]);
  for (size_t i = 36; i < 72; ++i) EXPECT_DOUBLE_EQ(zt[i], std::sqrt(s.abar(500)) * z0[i]);
  EXPECT_THROW(add_noise(z0, {0}, eps, s), ShapeError);
  EXPECT_THROW(add_noise(z0, {0, 1001}, eps, s), std::out_of_range);
}

TEST(AddNoiseTest, VariancePreservingMonteCarlo) {
  Rng rng(52);
  const NoiseSchedule s = NoiseSchedule::make(1000);
  for (int t : {1, 100, 500, 1000}) {
    const Tensor z0 = Tensor::randn({1, 100000}, rng);
    const Tensor eps = Tensor::randn(z0.shape(), rng);
    const Tensor zt = add_noise(z0, {t}, eps, s);
    double m = zt.mean(), v = 0;
    for (double x : zt.vec()) v += (x - m) * (x - m);
    v /= zt.size();
    EXPECT_NEAR(v, 1.0, 0.02) << "t " << t;
  }
}

TEST(AddNoiseTest, VarVersionMatchesTensorVersion) {
  Rng rng(53);
  const NoiseSchedule s = NoiseSchedule::make(1000);
  const Tensor z0 = Tensor::randn({3, 2, 2, 2}, rng);
  const Tensor eps = Tensor::randn(z0.shape(), rng);
  const std::vector<int> t = {0, 7, 999};
  const Tensor a = add_noise(z0, t, eps, s);
  const Tensor b = add_noise(Var(z0), t, eps, s).value();
  for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(DiffusionLossTest, OracleZeroAndNullPredictors) {
  Rng rng(54);
  const NoiseSchedule s = NoiseSchedule::make(1000);
  const Tensor z0 = Tensor::randn({4, 4, 4, 4}, rng);
  DiffusionDraw draw;
  // Oracle: recover the exact noise from z_t given z0.
  const TrainPredictor oracle = [&](const Var& zt, const std::vector<int>& t) {
    Tensor e(zt.shape());
    const size_t per = e.size() / t.size();
    for (size_t n = 0; n < t.size(); ++n) {
      const double a = s.abar(t[n]);
      for (size_t i = n * per; i < (n + 1) * per; ++i) {
        e[i] = (zt.value()[i] - std::sqrt(a) * z0[i]) / std::sqrt(1 - a);
      }
    }
    return Var(e);
  };
  EXPECT_LT(diffusion_loss(oracle, z0, s, rng, &draw).value().item(), 1e-20);
  for (int t : draw.t) {
    EXPECT_GE(t, 1);
    EXPECT_LE(t, 1000);
  }
  const TrainPredictor zero = [](const Var& zt, const std::vector<int>&) {
    return Var(Tensor(zt.shape(), 0.0));
  };
  const Tensor big = Tensor::randn({10, 1000}, rng);
  EXPECT_NEAR(diffusion_loss(zero, big, s, rng).value().item(), 1.0, 0.05);
}

TEST(DiffusionLossTest, GradientOfStubDenoiserMatchesFiniteDifferences) {
  const NoiseSchedule s = NoiseSchedule::make(1000);
  Rng data_rng(55);
  const Tensor z0 = Tensor::randn({3, 2, 2, 2}, data_rng);
  const double err = testing::gradient_relative_error(
      [&](const std::vector<Var>& p) {
        Rng rng(56);  // same draw on every evaluation
        const TrainPredictor stub = [&](const Var& zt, const std::vector<int>&) {
          return zt * ops::reshape(p[0], {1, 1, 1, 1}) + ops::reshape(p[1], {1, 1, 1, 1});
        };
        return diffusion_loss(stub, z0, s, rng);
      },
      {Tensor({1}, 0.3), Tensor({1}, -0.2)});
  EXPECT_LT(err, 1e-4);
}

TEST(DdimTest, PerfectNoiseInvertsExactly) {
  Rng rng(57);
  const NoiseSchedule s = NoiseSchedule::make(1000);
  const Tensor z0 = Tensor::randn({1, 4, 4, 4}, rng);
  const Tensor eps = Tensor::randn(z0.shape(), rng);
  for (int t = 1; t <= 1000; ++t) {
    const Tensor zt = add_noise(z0, {t}, eps, s);
    const Tensor x0 = ddim_step(zt, eps, t, 0, s);
    ASSERT_LE((x0 - z0).max_abs(), 1e-10) << "t " << t;
  }
  const Tensor zt = add_noise(z0, {600}, eps, s);
  const Tensor mid = ddim_step(zt, eps, 600, 300, s);
  EXPECT_LE((mid - add_noise(z0, {300}, eps, s)).max_abs(), 1e-12);
  EXPECT_THROW(ddim_step(zt, eps, 300, 300, s), std::invalid_argument);
}

TEST(DdimTest, StridedTimesteps) {
  const std::vector<int> ts = ddim_timesteps(1000, 50);
  ASSERT_EQ(ts.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(ts[i], 1000 - 20 * i);
  EXPECT_THROW(ddim_timesteps(1000, 0), std::invalid_argument);
}

// For z0 ~ N(m, v) per element, E[eps | z_t] is linear in z_t:
//   eps* = sqrt(1 - a) (z_t - sqrt(a) m) / (a v + 1 - a),   a = abar_t.
TEST(DdimTest, OptimalPredictorRecoversGaussianMean) {
  const NoiseSchedule s = NoiseSchedule::make(1000);
  Rng rng(58);
  const int d = 8, n = 20000;
  const double v = 0.25;
  Tensor mean({1, d});
  for (int j = 0; j < d; ++j) mean[j] = -1.5 + 3.0 * j / (d - 1);
  const SamplePredictor optimal = [&](const Tensor& zt, int t, bool) {
    const double a = s.abar(t);
    Tensor e(zt.shape());
    for (size_t i = 0; i < e.size(); ++i) {
      e[i] = std::sqrt(1 - a) * (zt[i] - std::sqrt(a) * mean[i % d]) / (a * v + 1 - a);
    }
    return e;
  };
  // Start from the exact marginal at T, N(sqrt(a_T) m, a_T v + 1 - a_T).
  const double aT = s.abar(1000);
  Tensor zT({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      zT[i * d + j] = std::sqrt(aT) * mean[j] + std::sqrt(aT * v + 1 - aT) * rng.normal();
  SampleStats stats;
  const Tensor out = ddim_sample_from(optimal, zT, s, 50, 1.0, &stats);
  EXPECT_EQ(stats.evaluations, 50);
  for (int j = 0; j < d; ++j) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += out[i * d + j];
    EXPECT_NEAR(m / n, mean[j], 1e-2) << "element " << j;
  }
  // The sampler is affine here, so the marginal mean follows the mean path.
  Tensor m0({1, d});
  for (int j = 0; j < d; ++j) m0[j] = std::sqrt(aT) * mean[j];
  const Tensor path = ddim_sample_from(optimal, m0, s, 50, 1.0);
  for (int j = 0; j < d; ++j) EXPECT_NEAR(path[j], mean[j], 1e-3);
}

TEST(CfgTest, Identities) {
  Rng rng(59);
  const Tensor c = Tensor::randn({2, 3}, rng), u = Tensor::randn({2, 3}, rng);
  EXPECT_EQ(cfg_combine(c, u, 1.0), c);
  for (double scale : {0.0, 1.0, 5.0}) EXPECT_EQ(cfg_combine(u, u, scale), u);
  const Tensor sum = cfg_combine(c, u, 0.5) + cfg_combine(u, c, 0.5);
  EXPECT_LE((sum - (c + u)).max_abs(), 1e-15);
  const Tensor e5 = cfg_combine(c, u, 5.0);
  for (size_t i = 0; i < e5.size(); ++i) EXPECT_DOUBLE_EQ(e5[i], u[i] + 5.0 * (c[i] - u[i]));
  EXPECT_THROW(cfg_combine(c, Tensor({3, 2}), 2.0), ShapeError);
}

TEST(SampleTest, EvaluationCountAndDeterminism) {
  const NoiseSchedule s = NoiseSchedule::make(1000);
  const SamplePredictor pred = [](const Tensor& zt, int t, bool cond) {
    Tensor e = zt * (cond ? 0.1 : 0.05);
    e[0] += t * 1e-4;
    return e;
  };
  SampleStats one, two;
  Rng r1(7), r2(7), r3(7);
  const Tensor a = sample(pred, {1, 4, 4, 4}, s, 50, 1.0, r1, &one);
  const Tensor b = sample(pred, {1, 4, 4, 4}, s, 50, 5.0, r2, &two);
  EXPECT_EQ(one.evaluations, 50);
  EXPECT_EQ(two.evaluations, 100);
  EXPECT_EQ(sample(pred, {1, 4, 4, 4}, s, 50, 5.0, r3), b);
  EXPECT_FALSE(a == b);
  Rng r4(7);
  EXPECT_THROW(sample(pred, {1, 4}, s, 0, 5.0, r4), std::invalid_argument);
}

}  // namespace
}  // namespace diffcodec
