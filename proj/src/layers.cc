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

#include "diffcodec/layers.h"

#include <cmath>

#include "diffcodec/archive.h"

namespace diffcodec {

std::vector<Var*> param_handles(const NamedParams& params) {
  std::vector<Var*> out;
  out.reserve(params.size());
  for (const auto& [name, v] : params) out.push_back(v);
  return out;
}

void set_requires_grad(const NamedParams& params, bool requires_grad) {
  for (const auto& [name, v] : params) v->set_requires_grad(requires_grad);
}

void save_params(const NamedParams& params, TensorArchive& archive) {
  for (const auto& [name, v] : params) archive.put(name, v->value());
}

void load_params(const NamedParams& params, const TensorArchive& archive) {
  for (const auto& [name, v] : params) {
    const Tensor& t = archive.get(name);
    if (t.shape() != v->shape()) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_string(t.shape()) +
                       ", model expects " + shape_string(v->shape()));
    }
    v->mutable_value() = t;
  }
}

void copy_param_values(const NamedParams& from, const NamedParams& to) {
  if (from.size() != to.size()) throw ShapeError("parameter lists differ in length");
  for (size_t i = 0; i < from.size(); ++i) {
    if (from[i].second->shape() != to[i].second->shape()) {
      throw ShapeError("parameter '" + from[i].first + "' shape differs from '" + to[i].first + "'");
    }
    to[i].second->mutable_value() = from[i].second->value();
  }
}

size_t param_count(const NamedParams& params) {
  size_t n = 0;
  for (const auto& [name, v] : params) n += v->size();
  return n;
}

Conv2d::Conv2d(int in, int out, int kernel, int s, Rng& rng, double init_scale)
    : stride(s), pad(kernel / 2) {
  const double stddev = init_scale / std::sqrt(static_cast<double>(in * kernel * kernel));
  weight = Var(Tensor::randn({out, in, kernel, kernel}, rng, stddev), true);
  bias = Var(Tensor({out}, 0.0), true);
}

Conv2d Conv2d::zeros(int in, int out, int kernel) {
  Conv2d c;
  c.stride = 1;
  c.pad = kernel / 2;
  c.weight = Var(Tensor({out, in, kernel, kernel}, 0.0), true);
  c.bias = Var(Tensor({out}, 0.0), true);
  return c;
}

void Conv2d::collect(NamedParams& out, const std::string& prefix) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

Linear::Linear(int in, int out, Rng& rng, double init_scale) {
  weight = Var(Tensor::randn({out, in}, rng, init_scale / std::sqrt(static_cast<double>(in))), true);
  bias = Var(Tensor({out}, 0.0), true);
}

void Linear::collect(NamedParams& out, const std::string& prefix) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

ResBlock::ResBlock(int in, int out, int emb_dim, Rng& rng)
    : conv1(in, out, 3, 1, rng), conv2(out, out, 3, 1, rng, 0.5) {
  if (emb_dim > 0) {
    has_emb = true;
    emb_proj = Linear(emb_dim, out, rng);
  }
  if (in != out) {
    has_skip = true;
    skip = Conv2d(in, out, 1, 1, rng);
  }
}

Var ResBlock::forward(const Var& x, const Var* emb) const {
  Var h = conv1.forward(ops::silu(x));
  if (has_emb && emb) {
    Var e = emb_proj.forward(ops::silu(*emb));
    h = h + ops::reshape(e, {e.dim(0), e.dim(1), 1, 1});
  }
  h = conv2.forward(ops::silu(h));
  return (has_skip ? skip.forward(x) : x) + h;
}

void ResBlock::collect(NamedParams& out, const std::string& prefix) {
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
  if (has_emb) emb_proj.collect(out, prefix + ".emb");
  if (has_skip) skip.collect(out, prefix + ".skip");
}

Adam::Adam(std::vector<Var*> params, Options opts) : params_(std::move(params)), opts_(opts) {
  for (Var* p : params_) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Var* p = params_[i];
    if (!p->has_grad()) continue;
    const Tensor& g = p->grad();
    Tensor& w = p->mutable_value();
    for (size_t j = 0; j < w.size(); ++j) {
      m_[i][j] = opts_.beta1 * m_[i][j] + (1.0 - opts_.beta1) * g[j];
      v_[i][j] = opts_.beta2 * v_[i][j] + (1.0 - opts_.beta2) * g[j] * g[j];
      const double mh = m_[i][j] / c1;
      const double vh = v_[i][j] / c2;
      w[j] -= opts_.lr * mh / (std::sqrt(vh) + opts_.eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (Var* p : params_) p->zero_grad();
}

}  // namespace diffcodec
