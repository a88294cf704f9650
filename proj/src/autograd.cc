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

#include "diffcodec/autograd.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace diffcodec {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool any_requires_grad(const std::vector<Var>& inputs) {
  if (!g_grad_enabled) return false;
  for (const Var& v : inputs) {
    if (v.defined() && v.requires_grad()) return true;
  }
  return false;
}

// Wraps a freshly computed value into a graph node.
Var make_result(Tensor value, const std::vector<Var>& inputs,
                std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (any_requires_grad(inputs)) {
    node->requires_grad = true;
    for (const Var& v : inputs) node->parents.push_back(v.defined() ? v.node() : nullptr);
    node->backward = std::move(bw);
  }
  return Var::from_node(std::move(node));
}

Node* parent(Node& self, size_t i) {
  Node* p = self.parents[i].get();
  return (p && p->requires_grad) ? p : nullptr;
}

struct Broadcast {
  Shape out;
  std::vector<size_t> stride_a, stride_b;
  bool same = false;
};

std::vector<size_t> aligned_strides(const Shape& s, const Shape& out) {
  const size_t r = out.size();
  std::vector<size_t> st(r, 0);
  size_t acc = 1;
  for (size_t k = 0; k < s.size(); ++k) {
    const size_t d = s.size() - 1 - k;
    const size_t od = r - 1 - k;
    st[od] = (s[d] == 1 && out[od] != 1) ? 0 : acc;
    acc *= static_cast<size_t>(s[d]);
  }
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  for (size_t k = 0; k < r; ++k) {
    const int da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const int db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    p.out[r - 1 - k] = std::max(da, db);
  }
  p.stride_a = aligned_strides(a, p.out);
  p.stride_b = aligned_strides(b, p.out);
  return p;
}

template <class F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const size_t n = shape_numel(p.out);
  if (p.same) {
    for (size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const int r = static_cast<int>(p.out.size());
  std::vector<int> idx(r, 0);
  size_t ia = 0, ib = 0;
  for (size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

// Generic broadcast binary op. fa/fb give the partial derivatives.
template <class Fwd, class Da, class Db>
Var binary(const Var& a, const Var& b, Fwd fwd, Da da, Db db) {
  Broadcast p = plan_broadcast(a.shape(), b.shape());
  Tensor out(p.out);
  const double* pa = a.value().ptr();
  const double* pb = b.value().ptr();
  double* po = out.ptr();
  for_each_broadcast(p, [&](size_t i, size_t ia, size_t ib) { po[i] = fwd(pa[ia], pb[ib]); });
  return make_result(std::move(out), {a, b}, [p, da, db](Node& self) {
    Node* na = parent(self, 0);
    Node* nb = parent(self, 1);
    const double* g = self.grad.ptr();
    const double* xa = self.parents[0]->value.ptr();
    const double* xb = self.parents[1]->value.ptr();
    double* ga = na ? na->grad_buffer().ptr() : nullptr;
    double* gb = nb ? nb->grad_buffer().ptr() : nullptr;
    for_each_broadcast(p, [&](size_t i, size_t ia, size_t ib) {
      if (ga) ga[ia] += g[i] * da(xa[ia], xb[ib]);
      if (gb) gb[ib] += g[i] * db(xa[ia], xb[ib]);
    });
  });
}

// Elementwise unary op; df receives (x, y).
template <class Fwd, class Df>
Var unary(const Var& a, Fwd fwd, Df df) {
  Tensor out(a.shape());
  const double* pa = a.value().ptr();
  double* po = out.ptr();
  for (size_t i = 0; i < out.size(); ++i) po[i] = fwd(pa[i]);
  return make_result(std::move(out), {a}, [df](Node& self) {
    Node* na = parent(self, 0);
    if (!na) return;
    const double* g = self.grad.ptr();
    const double* x = self.parents[0]->value.ptr();
    const double* y = self.value.ptr();
    double* ga = na->grad_buffer().ptr();
    for (size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void im2col(const double* x, int c, int h, int w, int k, int stride, int pad, int ho,
            int wo, double* cols) {
  const int p = ho * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + static_cast<size_t>((ci * k + ky) * k + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(row + oy * wo, row + (oy + 1) * wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * wo + ox] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, int c, int h, int w, int k, int stride, int pad, int ho,
                int wo, double* x) {
  const int p = ho * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + static_cast<size_t>((ci * k + ky) * k + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = x + (static_cast<size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

void require_rank(const Var& v, int rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(v.shape()));
  }
}

}  // namespace

double round_half_away(double v) { return std::round(v); }

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
  if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

const Tensor& Var::grad() const {
  if (!has_grad()) node_->grad_buffer();
  return node_->grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root) {
  if (!root.requires_grad()) return;
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Tensor& seed = root.node()->grad_buffer();
  for (double& g : seed.data()) g += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace ops {

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var silu(const Var& a) {
  return unary(
      a, [](double x) { return x * stable_sigmoid(x); },
      [](double x, double) {
        const double s = stable_sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var normal_cdf(const Var& a) {
  return unary(
      a, [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); },
      [](double x, double) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); });
}

Var lower_bound(const Var& a, double bound) {
  Tensor out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.value()[i], bound);
  return make_result(std::move(out), {a}, [bound](Node& self) {
    Node* na = parent(self, 0);
    if (!na) return;
    Tensor& ga = na->grad_buffer();
    for (size_t i = 0; i < ga.size(); ++i) {
      const double g = self.grad[i];
      if (self.parents[0]->value[i] >= bound || g < 0.0) ga[i] += g;
    }
  });
}

Var ste_round(const Var& a) {
  Tensor out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = round_half_away(a.value()[i]);
  return make_result(std::move(out), {a}, [](Node& self) {
    if (Node* na = parent(self, 0)) na->grad_buffer() += self.grad;
  });
}

Var sum(const Var& a) {
  return make_result(Tensor::scalar(a.value().sum()), {a}, [](Node& self) {
    Node* na = parent(self, 0);
    if (!na) return;
    const double g = self.grad[0];
    for (double& v : na->grad_buffer().data()) v += g;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(std::max<size_t>(a.size(), 1));
  return mul_scalar(sum(a), 1.0 / n);
}

Var sum_per_item(const Var& a) {
  const int n = a.dim(0);
  const size_t inner = a.size() / static_cast<size_t>(n);
  Tensor out(Shape{n});
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < inner; ++j) acc += a.value()[i * inner + j];
    out[i] = acc;
  }
  return make_result(std::move(out), {a}, [inner](Node& self) {
    Node* na = parent(self, 0);
    if (!na) return;
    Tensor& ga = na->grad_buffer();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i / inner];
  });
}

Var mse(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  return mean(square(sub(a, b)));
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& self) {
    Node* na = parent(self, 0);
    if (!na) return;
    Tensor& ga = na->grad_buffer();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels of nothing");
  for (const Var& p : parts) require_rank(p, 4, "concat_channels");
  const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int c_total = 0;
  for (const Var& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      throw ShapeError("concat_channels mismatch " + shape_string(p.shape()) + " vs " +
                       shape_string(parts[0].shape()));
    }
    c_total += p.dim(1);
  }
  const size_t hw = static_cast<size_t>(h) * w;
  Tensor out(Shape{n, c_total, h, w});
  std::vector<int> offsets;
  int off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const int c = p.dim(1);
    for (int b = 0; b < n; ++b) {
      std::copy_n(p.value().ptr() + static_cast<size_t>(b) * c * hw, c * hw,
                  out.ptr() + (static_cast<size_t>(b) * c_total + off) * hw);
    }
    off += c;
  }
  return make_result(std::move(out), parts, [offsets, n, c_total, hw](Node& self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      Node* np = parent(self, k);
      if (!np) continue;
      const int c = np->value.dim(1);
      Tensor& g = np->grad_buffer();
      for (int b = 0; b < n; ++b) {
        const double* src = self.grad.ptr() + (static_cast<size_t>(b) * c_total + offsets[k]) * hw;
        double* dst = g.ptr() + static_cast<size_t>(b) * c * hw;
        for (size_t i = 0; i < c * hw; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice_channels(const Var& a, int start, int count) {
  require_rank(a, 4, "slice_channels");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (start < 0 || count < 0 || start + count > c) {
    throw ShapeError("slice_channels out of range on " + shape_string(a.shape()));
  }
  const size_t hw = static_cast<size_t>(h) * w;
  Tensor out(Shape{n, count, h, w});
  for (int b = 0; b < n; ++b) {
    std::copy_n(a.value().ptr() + (static_cast<size_t>(b) * c + start) * hw, count * hw,
                out.ptr() + static_cast<size_t>(b) * count * hw);
  }
  return make_result(std::move(out), {a}, [n, c, start, count, hw](Node& self) {
    Node* na = parent(self, 0);
    if (!na) return;
    Tensor& g = na->grad_buffer();
    for (int b = 0; b < n; ++b) {
      const double* src = self.grad.ptr() + static_cast<size_t>(b) * count * hw;
      double* dst = g.ptr() + (static_cast<size_t>(b) * c + start) * hw;
      for (size_t i = 0; i < count * hw; ++i) dst[i] += src[i];
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), k = w.dim(2);
  if (w.dim(1) != c || w.dim(3) != k) {
    throw ShapeError("conv2d weight " + shape_string(w.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  }
  if (b.defined() && (b.value().rank() != 1 || b.dim(0) != o)) {
    throw ShapeError("conv2d bias " + shape_string(b.shape()));
  }
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d output empty for " + shape_string(x.shape()));
  const int ckk = c * k * k;
  const int p = ho * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  Tensor out(Shape{n, o, ho, wo});
  std::vector<double> cols(direct ? 0 : static_cast<size_t>(ckk) * p);
  ConstMapMat wm(w.value().ptr(), o, ckk);
  for (int bi = 0; bi < n; ++bi) {
    const double* xs = x.value().ptr() + static_cast<size_t>(bi) * c * h * wd;
    const double* colp = xs;
    if (!direct) {
      im2col(xs, c, h, wd, k, stride, pad, ho, wo, cols.data());
      colp = cols.data();
    }
    MapMat om(out.ptr() + static_cast<size_t>(bi) * o * p, o, p);
    om.noalias() = wm * ConstMapMat(colp, ckk, p);
    if (b.defined()) {
      for (int oi = 0; oi < o; ++oi) om.row(oi).array() += b.value()[oi];
    }
  }

  std::vector<Var> inputs = {x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(std::move(out), inputs,
                     [n, c, h, wd, o, k, stride, pad, ho, wo, ckk, p, direct](Node& self) {
    Node* nx = parent(self, 0);
    Node* nw = parent(self, 1);
    Node* nb = self.parents.size() > 2 ? parent(self, 2) : nullptr;
    const Tensor& xv = self.parents[0]->value;
    const Tensor& wv = self.parents[1]->value;
    ConstMapMat wm(wv.ptr(), o, ckk);
    std::vector<double> cols(direct ? 0 : static_cast<size_t>(ckk) * p);
    std::vector<double> dcols(static_cast<size_t>(ckk) * p);
    for (int bi = 0; bi < n; ++bi) {
      ConstMapMat gm(self.grad.ptr() + static_cast<size_t>(bi) * o * p, o, p);
      if (nb) {
        Tensor& gb = nb->grad_buffer();
        // Plain loops keep the summation order independent of buffer alignment.
        for (int oi = 0; oi < o; ++oi) {
          double acc = 0.0;
          for (int pi = 0; pi < p; ++pi) acc += gm(oi, pi);
          gb[oi] += acc;
        }
      }
      if (nw) {
        const double* xs = xv.ptr() + static_cast<size_t>(bi) * c * h * wd;
        const double* colp = xs;
        if (!direct) {
          im2col(xs, c, h, wd, k, stride, pad, ho, wo, cols.data());
          colp = cols.data();
        }
        MapMat gw(nw->grad_buffer().ptr(), o, ckk);
        gw.noalias() += gm * ConstMapMat(colp, ckk, p).transpose();
      }
      if (nx) {
        double* gx = nx->grad_buffer().ptr() + static_cast<size_t>(bi) * c * h * wd;
        if (direct) {
          MapMat gxm(gx, ckk, p);
          gxm.noalias() += wm.transpose() * gm;
        } else {
          MapMat dc(dcols.data(), ckk, p);
          dc.noalias() = wm.transpose() * gm;
          col2im_add(dcols.data(), c, h, wd, k, stride, pad, ho, wo, gx);
        }
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x, 4, "upsample_nearest2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{n, c, 2 * h, 2 * w});
  for (int b = 0; b < n; ++b)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) out.at(b, ci, y, xx) = x.value().at(b, ci, y / 2, xx / 2);
  return make_result(std::move(out), {x}, [n, c, h, w](Node& self) {
    Node* nx = parent(self, 0);
    if (!nx) return;
    Tensor& g = nx->grad_buffer();
    for (int b = 0; b < n; ++b)
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx) g.at(b, ci, y / 2, xx / 2) += self.grad.at(b, ci, y, xx);
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1);
  const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
  Tensor out(Shape{n, c});
  for (size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < hw; ++j) acc += x.value()[i * hw + j];
    out[i] = acc / static_cast<double>(hw);
  }
  return make_result(std::move(out), {x}, [hw](Node& self) {
    Node* nx = parent(self, 0);
    if (!nx) return;
    Tensor& g = nx->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i / hw] / static_cast<double>(hw);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in) {
    throw ShapeError("linear weight " + shape_string(w.shape()) + " vs input " +
                     shape_string(x.shape()));
  }
  Tensor out(Shape{n, out_dim});
  MapMat om(out.ptr(), n, out_dim);
  om.noalias() = ConstMapMat(x.value().ptr(), n, in) *
                 ConstMapMat(w.value().ptr(), out_dim, in).transpose();
  if (b.defined()) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_dim; ++j) om(i, j) += b.value()[j];
  }
  std::vector<Var> inputs = {x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(std::move(out), inputs, [n, in, out_dim](Node& self) {
    Node* nx = parent(self, 0);
    Node* nw = parent(self, 1);
    Node* nb = self.parents.size() > 2 ? parent(self, 2) : nullptr;
    ConstMapMat g(self.grad.ptr(), n, out_dim);
    if (nx) {
      MapMat(nx->grad_buffer().ptr(), n, in).noalias() +=
          g * ConstMapMat(self.parents[1]->value.ptr(), out_dim, in);
    }
    if (nw) {
      MapMat(nw->grad_buffer().ptr(), out_dim, in).noalias() +=
          g.transpose() * ConstMapMat(self.parents[0]->value.ptr(), n, in);
    }
    if (nb) {
      Tensor& gb = nb->grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) gb[j] += g(i, j);
    }
  });
}

Var bmm(const Var& a, const Var& b) {
  require_rank(a, 3, "bmm lhs");
  require_rank(b, 3, "bmm rhs");
  const int bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != bs || b.dim(1) != k) {
    throw ShapeError("bmm " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out(Shape{bs, m, n});
  for (int i = 0; i < bs; ++i) {
    MapMat(out.ptr() + static_cast<size_t>(i) * m * n, m, n).noalias() =
        ConstMapMat(a.value().ptr() + static_cast<size_t>(i) * m * k, m, k) *
        ConstMapMat(b.value().ptr() + static_cast<size_t>(i) * k * n, k, n);
  }
  return make_result(std::move(out), {a, b}, [bs, m, k, n](Node& self) {
    Node* na = parent(self, 0);
    Node* nb = parent(self, 1);
    for (int i = 0; i < bs; ++i) {
      ConstMapMat g(self.grad.ptr() + static_cast<size_t>(i) * m * n, m, n);
      if (na) {
        MapMat(na->grad_buffer().ptr() + static_cast<size_t>(i) * m * k, m, k).noalias() +=
            g * ConstMapMat(self.parents[1]->value.ptr() + static_cast<size_t>(i) * k * n, k, n)
                    .transpose();
      }
      if (nb) {
        MapMat(nb->grad_buffer().ptr() + static_cast<size_t>(i) * k * n, k, n).noalias() +=
            ConstMapMat(self.parents[0]->value.ptr() + static_cast<size_t>(i) * m * k, m, k)
                .transpose() * g;
      }
    }
  });
}

Var channels_to_rows(const Var& x) {
  require_rank(x, 4, "channels_to_rows");
  const int n = x.dim(0), c = x.dim(1);
  const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
  const int cols = static_cast<int>(n * hw);
  Tensor out(Shape{c, 1, cols});
  for (int b = 0; b < n; ++b)
    for (int ci = 0; ci < c; ++ci)
      std::copy_n(x.value().ptr() + (static_cast<size_t>(b) * c + ci) * hw, hw,
                  out.ptr() + static_cast<size_t>(ci) * cols + b * hw);
  return make_result(std::move(out), {x}, [n, c, hw, cols](Node& self) {
    Node* nx = parent(self, 0);
    if (!nx) return;
    Tensor& g = nx->grad_buffer();
    for (int b = 0; b < n; ++b)
      for (int ci = 0; ci < c; ++ci) {
        const double* src = self.grad.ptr() + static_cast<size_t>(ci) * cols + b * hw;
        double* dst = g.ptr() + (static_cast<size_t>(b) * c + ci) * hw;
        for (size_t i = 0; i < hw; ++i) dst[i] += src[i];
      }
  });
}

Var embedding_bag(const Var& table, const std::vector<std::vector<int>>& groups) {
  require_rank(table, 2, "embedding_bag");
  const int rows = table.dim(0), d = table.dim(1);
  const int n = static_cast<int>(groups.size());
  Tensor out(Shape{n, d});
  for (int g = 0; g < n; ++g) {
    for (int r : groups[g]) {
      if (r < 0 || r >= rows) {
        throw std::out_of_range("embedding row " + std::to_string(r) + " outside table of " +
                                std::to_string(rows));
      }
      for (int j = 0; j < d; ++j) out[static_cast<size_t>(g) * d + j] += table.value()[static_cast<size_t>(r) * d + j];
    }
  }
  return make_result(std::move(out), {table}, [groups, d](Node& self) {
    Node* nt = parent(self, 0);
    if (!nt) return;
    Tensor& gt = nt->grad_buffer();
    for (size_t g = 0; g < groups.size(); ++g)
      for (int r : groups[g])
        for (int j = 0; j < d; ++j) gt[static_cast<size_t>(r) * d + j] += self.grad[g * d + j];
  });
}

Var cosine_similarity_channels(const Var& a, const Var& b, double eps) {
  require_rank(a, 3, "cosine_similarity_channels");
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine similarity shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const int n = a.dim(0), c = a.dim(1), p = a.dim(2);
  Tensor out(Shape{n, p});
  const double* pa = a.value().ptr();
  const double* pb = b.value().ptr();
  for (int i = 0; i < n; ++i) {
    for (int q = 0; q < p; ++q) {
      double dot = 0, na2 = 0, nb2 = 0;
      for (int ci = 0; ci < c; ++ci) {
        const size_t idx = (static_cast<size_t>(i) * c + ci) * p + q;
        dot += pa[idx] * pb[idx];
        na2 += pa[idx] * pa[idx];
        nb2 += pb[idx] * pb[idx];
      }
      out[static_cast<size_t>(i) * p + q] = dot / std::max(std::sqrt(na2) * std::sqrt(nb2), eps);
    }
  }
  return make_result(std::move(out), {a, b}, [n, c, p, eps](Node& self) {
    Node* na = parent(self, 0);
    Node* nb = parent(self, 1);
    const double* pa = self.parents[0]->value.ptr();
    const double* pb = self.parents[1]->value.ptr();
    double* ga = na ? na->grad_buffer().ptr() : nullptr;
    double* gb = nb ? nb->grad_buffer().ptr() : nullptr;
    for (int i = 0; i < n; ++i) {
      for (int q = 0; q < p; ++q) {
        double na2 = 0, nb2 = 0;
        for (int ci = 0; ci < c; ++ci) {
          const size_t idx = (static_cast<size_t>(i) * c + ci) * p + q;
          na2 += pa[idx] * pa[idx];
          nb2 += pb[idx] * pb[idx];
        }
        const double prod = std::sqrt(na2) * std::sqrt(nb2);
        const double g = self.grad[static_cast<size_t>(i) * p + q];
        const double s = self.value[static_cast<size_t>(i) * p + q];
        const bool clamped = prod <= eps;
        const double den = clamped ? eps : prod;
        for (int ci = 0; ci < c; ++ci) {
          const size_t idx = (static_cast<size_t>(i) * c + ci) * p + q;
          if (ga) ga[idx] += g * (pb[idx] / den - (clamped ? 0.0 : s * pa[idx] / na2));
          if (gb) gb[idx] += g * (pa[idx] / den - (clamped ? 0.0 : s * pb[idx] / nb2));
        }
      }
    }
  });
}

}  // namespace ops
}  // namespace diffcodec
