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

// Variance-preserving diffusion: schedule, forward noising, epsilon loss,
// deterministic DDIM and classifier-free guidance.

#ifndef DIFFCODEC_DIFFUSION_H_
#define DIFFCODEC_DIFFUSION_H_

#include <functional>
#include <string>
#include <vector>

#include "diffcodec/autograd.h"

namespace diffcodec {

enum class ScheduleKind { kScaledLinear, kLinear };

ScheduleKind parse_schedule_kind(const std::string& name);

struct NoiseSchedule {
  int T = 0;
  // Index 0 is the clean state: beta[0] = 0, alpha_bar[0] = 1.
  std::vector<double> beta, alpha, alpha_bar;

  static NoiseSchedule make(int T, ScheduleKind kind = ScheduleKind::kScaledLinear,
                            double beta_start = 8.5e-4, double beta_end = 1.2e-2);
  double abar(int t) const;
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, one timestep per batch item.
Tensor add_noise(const Tensor& z0, const std::vector<int>& t, const Tensor& eps,
                 const NoiseSchedule& s);
Var add_noise(const Var& z0, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& s);

// Deterministic (eta = 0) DDIM update from t to t_prev < t.
Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& s);
// x0 implied by an epsilon prediction.
Tensor predict_x0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s);

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale);

// Uniformly strided, strictly decreasing timesteps starting at T; the walk
// ends with a final step to 0. For T = 1000, steps = 50: 1000, 980, ..., 20.
std::vector<int> ddim_timesteps(int T, int steps);

// Training-time predictor: (z_t, per-item t) -> eps_hat.
using TrainPredictor = std::function<Var(const Var& z_t, const std::vector<int>& t)>;

struct DiffusionDraw {
  std::vector<int> t;
  Tensor eps;
};

// Mean squared error between sampled and predicted noise, t ~ U{1..T}.
Var diffusion_loss(const TrainPredictor& predictor, const Tensor& z0, const NoiseSchedule& s,
                   Rng& rng, DiffusionDraw* draw = nullptr);

// Inference-time predictor: (z_t, t, conditional?) -> eps_hat.
using SamplePredictor = std::function<Tensor(const Tensor& z_t, int t, bool conditional)>;

struct SampleStats {
  int evaluations = 0;
};

// DDIM from the given starting latent at t = T.
Tensor ddim_sample_from(const SamplePredictor& predictor, Tensor z_T, const NoiseSchedule& s,
                        int steps, double cfg_scale, SampleStats* stats = nullptr);
// DDIM from pure Gaussian noise.
Tensor sample(const SamplePredictor& predictor, const Shape& shape, const NoiseSchedule& s,
              int steps, double cfg_scale, Rng& rng, SampleStats* stats = nullptr);

}  // namespace diffcodec

#endif  // DIFFCODEC_DIFFUSION_H_
