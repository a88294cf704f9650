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

#include <algorithm>
#include <cmath>

namespace diffcodec {

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Tail mass below which values are left to the escape bin.
constexpr double kTailMass = 1e-7;

}  // namespace

double gaussian_likelihood(double v, double mean, double scale) {
  const double d = std::abs(v - mean);
  const double p = phi((0.5 - d) / scale) - phi((-0.5 - d) / scale);
  return std::max(p, kLikelihoodFloor);
}

Var gaussian_bits(const Var& values, const Var& mean, const Var& scale) {
  Var d = ops::abs(values - mean);
  Var upper = ops::normal_cdf(ops::add_scalar(ops::neg(d), 0.5) / scale);
  Var lower = ops::normal_cdf(ops::add_scalar(ops::neg(d), -0.5) / scale);
  Var p = ops::lower_bound(upper - lower, kLikelihoodFloor);
  return ops::mul_scalar(ops::sum(ops::log(p)), -1.0 / std::log(2.0));
}

RateEstimate rate_gaussian(const Tensor& values, const Tensor& mean, const Tensor& scale) {
  if (!values.same_shape(mean) || !values.same_shape(scale)) {
    throw ShapeError("rate_gaussian: values " + shape_string(values.shape()) + ", mean " +
                     shape_string(mean.shape()) + ", scale " + shape_string(scale.shape()));
  }
  RateEstimate r;
  for (size_t i = 0; i < values.size(); ++i) {
    r.total_bits -= std::log2(gaussian_likelihood(values[i], mean[i], scale[i]));
  }
  r.breakdown["main"] = r.total_bits;
  return r;
}

FactorizedPrior::FactorizedPrior(int channels, Rng& rng, std::vector<int> hidden,
                                 double init_scale)
    : channels_(channels) {
  std::vector<int> filters = {1};
  filters.insert(filters.end(), hidden.begin(), hidden.end());
  filters.push_back(1);
  const double scale = std::pow(init_scale, 1.0 / static_cast<double>(filters.size() - 1));
  for (size_t k = 0; k + 1 < filters.size(); ++k) {
    const int in = filters[k], out = filters[k + 1];
    const double init = std::log(std::expm1(1.0 / scale / out));
    matrices_.emplace_back(Tensor({channels, out, in}, init), true);
    biases_.emplace_back(Tensor::uniform({channels, out, 1}, rng, -0.5, 0.5), true);
    if (k + 2 < filters.size()) factors_.emplace_back(Tensor({channels, out, 1}, 0.0), true);
  }
}

Var FactorizedPrior::logits(const Var& values) const {
  if (values.value().rank() != 3 || values.dim(0) != channels_ || values.dim(1) != 1) {
    throw ShapeError("factorized prior expects (" + std::to_string(channels_) + ", 1, P), got " +
                     shape_string(values.shape()));
  }
  Var x = values;
  for (size_t k = 0; k < matrices_.size(); ++k) {
    x = ops::bmm(ops::softplus(matrices_[k]), x) + biases_[k];
    if (k < factors_.size()) x = x + ops::tanh(factors_[k]) * ops::tanh(x);
  }
  return x;
}

Var FactorizedPrior::likelihood(const Var& values) const {
  if (values.value().rank() != 4 || values.dim(1) != channels_) {
    throw ShapeError("factorized prior expects (N, " + std::to_string(channels_) +
                     ", H, W), got " + shape_string(values.shape()));
  }
  Var rows = ops::channels_to_rows(values);
  Var lower = logits(ops::add_scalar(rows, -0.5));
  Var upper = logits(ops::add_scalar(rows, 0.5));
  // Evaluate on the side of the median where the sigmoid is not saturated.
  Tensor sign(lower.shape());
  for (size_t i = 0; i < sign.size(); ++i) {
    const double s = lower.value()[i] + upper.value()[i];
    sign[i] = s > 0 ? -1.0 : (s < 0 ? 1.0 : 0.0);
  }
  Var sv(std::move(sign));
  Var p = ops::abs(ops::sigmoid(sv * upper) - ops::sigmoid(sv * lower));
  return ops::lower_bound(p, kLikelihoodFloor);
}

Var FactorizedPrior::bits(const Var& values) const {
  return ops::mul_scalar(ops::sum(ops::log(likelihood(values))), -1.0 / std::log(2.0));
}

RateEstimate FactorizedPrior::rate(const Tensor& values) const {
  NoGradGuard guard;
  RateEstimate r;
  r.total_bits = bits(Var(values)).value().item();
  r.breakdown["hyper"] = r.total_bits;
  return r;
}

double FactorizedPrior::cdf(int channel, double x) const {
  std::vector<double> cur = {x};
  for (size_t k = 0; k < matrices_.size(); ++k) {
    const Tensor& m = matrices_[k].value();
    const int out = m.dim(1), in = m.dim(2);
    std::vector<double> next(out);
    for (int o = 0; o < out; ++o) {
      double acc = biases_[k].value()[static_cast<size_t>(channel) * out + o];
      for (int i = 0; i < in; ++i) {
        acc += softplus(m[(static_cast<size_t>(channel) * out + o) * in + i]) * cur[i];
      }
      if (k < factors_.size()) {
        acc += std::tanh(factors_[k].value()[static_cast<size_t>(channel) * out + o]) * std::tanh(acc);
      }
      next[o] = acc;
    }
    cur = std::move(next);
  }
  return sigmoid(cur[0]);
}

std::vector<CdfTable> FactorizedPrior::build_tables() const {
  std::vector<CdfTable> tables;
  tables.reserve(channels_);
  for (int c = 0; c < channels_; ++c) {
    int lo = kSymbolMax, hi = kSymbolMin;
    for (int k = kSymbolMin; k <= kSymbolMax; ++k) {
      if (cdf(c, k + 0.5) > kTailMass && cdf(c, k - 0.5) < 1.0 - kTailMass) {
        lo = std::min(lo, k);
        hi = std::max(hi, k);
      }
    }
    if (lo > hi) lo = hi = 0;
    std::vector<double> pmf;
    for (int k = lo; k <= hi; ++k) pmf.push_back(cdf(c, k + 0.5) - cdf(c, k - 0.5));
    pmf.push_back(std::max(0.0, cdf(c, lo - 0.5) + (1.0 - cdf(c, hi + 0.5))));
    tables.push_back(quantize_pmf(lo, pmf, true));
  }
  return tables;
}

void FactorizedPrior::collect(NamedParams& out, const std::string& prefix) {
  for (size_t k = 0; k < matrices_.size(); ++k) {
    out.emplace_back(prefix + ".matrix" + std::to_string(k), &matrices_[k]);
    out.emplace_back(prefix + ".bias" + std::to_string(k), &biases_[k]);
  }
  for (size_t k = 0; k < factors_.size(); ++k) {
    out.emplace_back(prefix + ".factor" + std::to_string(k), &factors_[k]);
  }
}

RateEstimate rate_factorized(const Tensor& values, const FactorizedPrior& prior) {
  return prior.rate(values);
}

CdfTable build_gaussian_table(double mean, double scale) {
  scale = std::max(scale, kScaleMin);
  const int center = static_cast<int>(
      std::clamp(round_half_away(mean), static_cast<double>(kSymbolMin), static_cast<double>(kSymbolMax)));
  const int half = static_cast<int>(std::min(255.0, std::ceil(scale * 12.0) + 1.0));
  const int lo = std::max(kSymbolMin, center - half);
  const int hi = std::min(kSymbolMax, center + half);
  std::vector<double> pmf;
  pmf.reserve(hi - lo + 2);
  double mass = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double d = std::abs(k - mean);
    const double p = phi((0.5 - d) / scale) - phi((-0.5 - d) / scale);
    pmf.push_back(p);
    mass += p;
  }
  pmf.push_back(std::max(0.0, 1.0 - mass));
  return quantize_pmf(lo, pmf, true);
}

std::vector<CdfTable> build_gaussian_tables(std::span<const double> means,
                                            std::span<const double> scales) {
  if (means.size() != scales.size()) throw ShapeError("mean/scale count mismatch");
  std::vector<CdfTable> tables;
  tables.reserve(means.size());
  for (size_t i = 0; i < means.size(); ++i) tables.push_back(build_gaussian_table(means[i], scales[i]));
  return tables;
}

Hyperprior::Hyperprior(int code_channels, int hyper_channels, Rng& rng)
    : code_channels_(code_channels),
      hyper_channels_(hyper_channels),
      a1_(code_channels, hyper_channels, 3, 1, rng),
      a2_(hyper_channels, hyper_channels, 3, 2, rng),
      s1_(hyper_channels, code_channels, 3, 1, rng),
      s2_(code_channels, 2 * code_channels, 3, 1, rng, 0.5) {}

Var Hyperprior::analysis(const Var& y) const {
  if (y.value().rank() != 4 || y.dim(1) != code_channels_ || y.dim(2) % 2 || y.dim(3) % 2) {
    throw ShapeError("hyper analysis expects (N, " + std::to_string(code_channels_) +
                     ", even H, even W), got " + shape_string(y.shape()));
  }
  return a2_.forward(ops::silu(a1_.forward(y)));
}

GaussianParams Hyperprior::synthesis(const Var& z_hat) const {
  if (z_hat.value().rank() != 4 || z_hat.dim(1) != hyper_channels_) {
    throw ShapeError("hyper synthesis expects (N, " + std::to_string(hyper_channels_) +
                     ", H, W), got " + shape_string(z_hat.shape()));
  }
  Var h = s2_.forward(ops::silu(s1_.forward(ops::upsample_nearest2x(z_hat))));
  GaussianParams p;
  p.mean = ops::slice_channels(h, 0, code_channels_);
  p.scale = ops::lower_bound(ops::softplus(ops::slice_channels(h, code_channels_, code_channels_)),
                             kScaleMin);
  return p;
}

void Hyperprior::collect(NamedParams& out, const std::string& prefix) {
  a1_.collect(out, prefix + ".a1");
  a2_.collect(out, prefix + ".a2");
  s1_.collect(out, prefix + ".s1");
  s2_.collect(out, prefix + ".s2");
}

}  // namespace diffcodec
