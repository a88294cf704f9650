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

#include <cmath>
#include <stdexcept>

namespace diffcodec {

namespace {

void check_t(int t, const NoiseSchedule& s) {
  if (t < 0 || t > s.T) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(s.T) + "]");
  }
}

// Per-item coefficient tensor of shape (N, 1, ..., 1) for broadcasting.
Tensor per_item(const Shape& shape, const std::vector<double>& v) {
  Shape s(shape.size(), 1);
  s[0] = shape[0];
  return Tensor(s, v);
}

}  // namespace

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "scaled_linear") return ScheduleKind::kScaledLinear;
  if (name == "linear") return ScheduleKind::kLinear;
  throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

NoiseSchedule NoiseSchedule::make(int T, ScheduleKind kind, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(beta_start > 0 && beta_end < 1 && beta_start <= beta_end)) {
    throw std::invalid_argument("schedule betas must satisfy 0 < start <= end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 1.0);
  s.alpha_bar.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double u = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    if (kind == ScheduleKind::kScaledLinear) {
      const double r = std::sqrt(beta_start) + u * (std::sqrt(beta_end) - std::sqrt(beta_start));
      s.beta[t] = r * r;
    } else {
      s.beta[t] = beta_start + u * (beta_end - beta_start);
    }
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

double NoiseSchedule::abar(int t) const {
  check_t(t, *this);
  return alpha_bar[t];
}

Tensor add_noise(const Tensor& z0, const std::vector<int>& t, const Tensor& eps,
                 const NoiseSchedule& s) {
  if (!z0.same_shape(eps)) throw ShapeError("add_noise: eps shape differs from z0");
  if (static_cast<int>(t.size()) != z0.dim(0)) throw ShapeError("add_noise: one t per item");
  Tensor out(z0.shape());
  const size_t per = z0.size() / t.size();
  for (size_t n = 0; n < t.size(); ++n) {
    const double a = s.abar(t[n]);
    const double ca = std::sqrt(a), cb = std::sqrt(1.0 - a);
    for (size_t i = n * per; i < (n + 1) * per; ++i) out[i] = ca * z0[i] + cb * eps[i];
  }
  return out;
}

Var add_noise(const Var& z0, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& s) {
  if (!z0.value().same_shape(eps)) throw ShapeError("add_noise: eps shape differs from z0");
  if (static_cast<int>(t.size()) != z0.dim(0)) throw ShapeError("add_noise: one t per item");
  std::vector<double> ca, cb;
  for (int ti : t) {
    ca.push_back(std::sqrt(s.abar(ti)));
    cb.push_back(std::sqrt(1.0 - s.abar(ti)));
  }
  Tensor noise = eps;
  const size_t per = eps.size() / t.size();
  for (size_t n = 0; n < t.size(); ++n)
    for (size_t i = n * per; i < (n + 1) * per; ++i) noise[i] *= cb[n];
  return z0 * Var(per_item(z0.shape(), ca)) + Var(std::move(noise));
}

Tensor predict_x0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s) {
  if (!z_t.same_shape(eps_hat)) throw ShapeError("ddim: eps shape differs from z_t");
  const double a = s.abar(t);
  const double ca = std::sqrt(a), cb = std::sqrt(1.0 - a);
  Tensor x0(z_t.shape());
  for (size_t i = 0; i < z_t.size(); ++i) x0[i] = (z_t[i] - cb * eps_hat[i]) / ca;
  return x0;
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& s) {
  if (t <= t_prev) throw std::invalid_argument("ddim_step requires t > t_prev");
  check_t(t_prev, s);
  Tensor x0 = predict_x0(z_t, eps_hat, t, s);
  if (t_prev == 0) return x0;
  const double ap = s.abar(t_prev);
  const double ca = std::sqrt(ap), cb = std::sqrt(1.0 - ap);
  for (size_t i = 0; i < x0.size(); ++i) x0[i] = ca * x0[i] + cb * eps_hat[i];
  return x0;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale) {
  if (!eps_cond.same_shape(eps_uncond)) throw ShapeError("cfg_combine: shape mismatch");
  if (scale == 1.0) return eps_cond;
  Tensor out(eps_cond.shape());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = eps_uncond[i] + scale * (eps_cond[i] - eps_uncond[i]);
  }
  return out;
}

std::vector<int> ddim_timesteps(int T, int steps) {
  if (steps < 1) throw std::invalid_argument("sampling needs at least one step");
  if (steps > T) throw std::invalid_argument("more sampling steps than diffusion timesteps");
  std::vector<int> ts(steps);
  for (int i = 0; i < steps; ++i) {
    ts[i] = static_cast<int>(std::lround(static_cast<double>(steps - i) * T / steps));
  }
  return ts;
}

Var diffusion_loss(const TrainPredictor& predictor, const Tensor& z0, const NoiseSchedule& s,
                   Rng& rng, DiffusionDraw* draw) {
  DiffusionDraw d;
  d.t.resize(z0.dim(0));
  for (int& t : d.t) t = rng.uniform_int(1, s.T);
  d.eps = Tensor::randn(z0.shape(), rng);
  const Tensor z_t = add_noise(z0, d.t, d.eps, s);
  Var loss = ops::mse(predictor(Var(z_t), d.t), Var(d.eps));
  if (draw) *draw = std::move(d);
  return loss;
}

Tensor ddim_sample_from(const SamplePredictor& predictor, Tensor z, const NoiseSchedule& s,
                        int steps, double cfg_scale, SampleStats* stats) {
  const std::vector<int> ts = ddim_timesteps(s.T, steps);
  for (size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    Tensor eps = predictor(z, t, true);
    if (stats) ++stats->evaluations;
    if (cfg_scale != 1.0) {
      const Tensor eps_u = predictor(z, t, false);
      if (stats) ++stats->evaluations;
      eps = cfg_combine(eps, eps_u, cfg_scale);
    }
    z = ddim_step(z, eps, t, t_prev, s);
  }
  return z;
}

Tensor sample(const SamplePredictor& predictor, const Shape& shape, const NoiseSchedule& s,
              int steps, double cfg_scale, Rng& rng, SampleStats* stats) {
  if (steps < 1) throw std::invalid_argument("sampling needs at least one step");
  return ddim_sample_from(predictor, Tensor::randn(shape, rng), s, steps, cfg_scale, stats);
}

}  // namespace diffcodec
