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

// Minimal reverse-mode automatic differentiation over Tensor.
//
// A Var is a shared handle to a graph node. Operations record their parents
// and a backward closure only while gradient recording is enabled and at
// least one input requires a gradient; otherwise results are detached leaves,
// so inference never retains a graph.

#ifndef DIFFCODEC_AUTOGRAD_H_
#define DIFFCODEC_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <vector>

#include "diffcodec/tensor.h"

namespace diffcodec {

struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  // Detached copy of the value.
  Var detach() const { return Var(node_->value, false); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }
  static Var from_node(std::shared_ptr<Node> n);

 private:
  std::shared_ptr<Node> node_;
};

// Runs backpropagation from a scalar (or seeds with ones for non-scalars).
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace ops {

// Elementwise binary ops with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var silu(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
// Standard normal CDF.
Var normal_cdf(const Var& a);

// max(a, bound); the gradient passes where a >= bound or where it would push
// a upward, so a clamped value can recover.
Var lower_bound(const Var& a, double bound);

// Forward rounds half away from zero; backward is the identity.
Var ste_round(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
// Sum over every axis except axis 0, shape (N).
Var sum_per_item(const Var& a);
Var mse(const Var& a, const Var& b);

Var reshape(const Var& a, Shape shape);
// Concatenate along axis 1 (channels) of 4-D tensors.
Var concat_channels(const std::vector<Var>& parts);
// Channels [start, start + count) of a 4-D tensor.
Var slice_channels(const Var& a, int start, int count);

// x (N, C, H, W), w (O, C, K, K), b (O) or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);
// (N, C, H, W) -> (N, C) spatial mean.
Var global_avg_pool(const Var& x);
// x (N, in), w (out, in), b (out) or undefined.
Var linear(const Var& x, const Var& w, const Var& b);
// a (B, m, k), b (B, k, n) -> (B, m, n).
Var bmm(const Var& a, const Var& b);
// (N, C, H, W) -> (C, 1, N*H*W), position index running over (n, h, w).
Var channels_to_rows(const Var& x);
// Row gather from an embedding table (rows, dim) summed per group:
// out[g] = sum_{i in groups[g]} table[i].
Var embedding_bag(const Var& table, const std::vector<std::vector<int>>& groups);

// Cosine similarity along axis 1 of (N, C, P) -> (N, P). The denominator is
// max(|a||b|, eps), so a zero vector at a position yields similarity 0.
Var cosine_similarity_channels(const Var& a, const Var& b, double eps = 1e-8);

}  // namespace ops

// Operator sugar for the common cases.
inline Var operator+(const Var& a, const Var& b) { return ops::add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return ops::sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return ops::mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return ops::div(a, b); }
inline Var operator*(const Var& a, double s) { return ops::mul_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return ops::mul_scalar(a, s); }
inline Var operator+(const Var& a, double s) { return ops::add_scalar(a, s); }
inline Var operator-(const Var& a) { return ops::neg(a); }

// Round half away from zero.
double round_half_away(double v);

}  // namespace diffcodec

#endif  // DIFFCODEC_AUTOGRAD_H_
