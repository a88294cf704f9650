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

#ifndef DIFFCODEC_LAYERS_H_
#define DIFFCODEC_LAYERS_H_

#include <string>
#include <utility>
#include <vector>

#include "diffcodec/autograd.h"

namespace diffcodec {

class TensorArchive;

// (name, handle) pairs; handles alias the owning module's parameters.
using NamedParams = std::vector<std::pair<std::string, Var*>>;

std::vector<Var*> param_handles(const NamedParams& params);
void set_requires_grad(const NamedParams& params, bool requires_grad);
void save_params(const NamedParams& params, TensorArchive& archive);
// Throws if a name is missing or a shape differs.
void load_params(const NamedParams& params, const TensorArchive& archive);
// Deep copy of values between two identically laid out parameter lists.
void copy_param_values(const NamedParams& from, const NamedParams& to);
size_t param_count(const NamedParams& params);

struct Conv2d {
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, Rng& rng, double init_scale = 1.0);
  // All weights and bias exactly zero.
  static Conv2d zeros(int in, int out, int kernel);

  Var forward(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }
  void collect(NamedParams& out, const std::string& prefix);

  Var weight, bias;
  int stride = 1, pad = 0;
};

struct Linear {
  Linear() = default;
  Linear(int in, int out, Rng& rng, double init_scale = 1.0);

  Var forward(const Var& x) const { return ops::linear(x, weight, bias); }
  void collect(NamedParams& out, const std::string& prefix);

  Var weight, bias;
};

// Pre-activation residual block; the optional embedding is projected and
// added per channel between the two convolutions.
struct ResBlock {
  ResBlock() = default;
  ResBlock(int in, int out, int emb_dim, Rng& rng);

  Var forward(const Var& x, const Var* emb = nullptr) const;
  void collect(NamedParams& out, const std::string& prefix);

  Conv2d conv1, conv2;
  Linear emb_proj;
  Conv2d skip;
  bool has_emb = false, has_skip = false;
};

class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Var*> params, Options opts);

  // Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  void set_lr(double lr) { opts_.lr = lr; }
  const Options& options() const { return opts_; }

 private:
  std::vector<Var*> params_;
  Options opts_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace diffcodec

#endif  // DIFFCODEC_LAYERS_H_
