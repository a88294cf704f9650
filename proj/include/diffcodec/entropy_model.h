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

// Hyperprior entropy model: a mean-scale conditional Gaussian for the main
// code and a learned per-channel factorized density for the hyper code.
// Rates are differentiable bit counts for training; the same densities are
// turned into 16-bit tables for the range coder.

#ifndef DIFFCODEC_ENTROPY_MODEL_H_
#define DIFFCODEC_ENTROPY_MODEL_H_

#include <map>
#include <string>
#include <vector>

#include "diffcodec/layers.h"
#include "diffcodec/range_coder.h"

namespace diffcodec {

inline constexpr double kScaleMin = 0.11;
inline constexpr double kLikelihoodFloor = 1.0 / (1 << 24);

struct RateEstimate {
  double total_bits = 0.0;
  std::map<std::string, double> breakdown;
};

struct GaussianParams {
  Var mean;
  Var scale;  // >= kScaleMin
};

// Differentiable -log2 likelihood of integer-binned values, summed.
Var gaussian_bits(const Var& values, const Var& mean, const Var& scale);
RateEstimate rate_gaussian(const Tensor& values, const Tensor& mean, const Tensor& scale);
// Per-element likelihood P(v) = Phi((v-mu+0.5)/s) - Phi((v-mu-0.5)/s), floored.
double gaussian_likelihood(double v, double mean, double scale);

// Learned monotone CDF per channel (cascade of softplus-positive matrices and
// tanh gates, squashed by a sigmoid).
class FactorizedPrior {
 public:
  FactorizedPrior() = default;
  FactorizedPrior(int channels, Rng& rng, std::vector<int> hidden = {3, 3, 3},
                  double init_scale = 10.0);

  int channels() const { return channels_; }
  // values (C, 1, P) -> CDF logits (C, 1, P).
  Var logits(const Var& values) const;
  // values (N, C, H, W) -> per-element likelihood, shape (C, 1, N*H*W).
  Var likelihood(const Var& values) const;
  Var bits(const Var& values) const;
  RateEstimate rate(const Tensor& values) const;
  // Continuous CDF of channel c at x.
  double cdf(int channel, double x) const;

  // One table per channel, support window chosen from the tails plus escape.
  std::vector<CdfTable> build_tables() const;

  void collect(NamedParams& out, const std::string& prefix);

 private:
  int channels_ = 0;
  std::vector<Var> matrices_, biases_, factors_;
};

RateEstimate rate_factorized(const Tensor& values, const FactorizedPrior& prior);

// One table per element from mean/scale arrays of equal size.
std::vector<CdfTable> build_gaussian_tables(std::span<const double> means,
                                            std::span<const double> scales);
CdfTable build_gaussian_table(double mean, double scale);

// Hyper transforms: y (N, M, h, w) -> z_h (N, N_h, h/2, w/2) -> (mu, sigma).
class Hyperprior {
 public:
  Hyperprior() = default;
  Hyperprior(int code_channels, int hyper_channels, Rng& rng);

  Var analysis(const Var& y) const;
  GaussianParams synthesis(const Var& z_hat) const;
  int code_channels() const { return code_channels_; }
  int hyper_channels() const { return hyper_channels_; }

  void collect(NamedParams& out, const std::string& prefix);

 private:
  int code_channels_ = 0, hyper_channels_ = 0;
  Conv2d a1_, a2_, s1_, s2_;
};

}  // namespace diffcodec

#endif  // DIFFCODEC_ENTROPY_MODEL_H_
