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


#include "diffcodec/dataset.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "diffcodec/image_io.h"

namespace diffcodec {

namespace {

struct Color {
  const char* name;
  double r, g, b;
};

constexpr std::array<Color, 7> kColors = {{{"red", 0.9, 0.15, 0.1},
                                           {"green", 0.15, 0.8, 0.2},
                                           {"blue", 0.15, 0.3, 0.95},
                                           {"yellow", 0.95, 0.9, 0.15},
                                           {"magenta", 0.85, 0.2, 0.8},
                                           {"cyan", 0.2, 0.85, 0.9},
                                           {"white", 0.97, 0.97, 0.97}}};
constexpr std::array<const char*, 4> kShapes = {"circle", "square", "triangle", "ring"};

// Inside test in coordinates relative to the shape center, radius r.
bool inside(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0:
      return dx * dx + dy * dy <= r * r;
    case 1:
      return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
    case 2:  // upward triangle
      return dy <= 0.8 * r && dy >= -r + 2.0 * std::abs(dx);
    default: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.36 * r * r;
    }
  }
}

}  // namespace

Tensor Dataset::batch(const std::vector<int>& indices) const {
  std::vector<Tensor> parts;
  parts.reserve(indices.size());
  for (int i : indices) parts.push_back(image(i));
  return batch_concat(parts);
}

std::vector<TagSet> Dataset::batch_tags(const std::vector<int>& indices) const {
  std::vector<TagSet> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(tags.at(i));
  return out;
}

const std::vector<std::string>& synthetic_tag_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n(kShapes.begin(), kShapes.end());
    for (const Color& c : kColors) n.push_back(c.name);
    n.push_back("dark_background");
    n.push_back("light_background");
    return n;
  }();
  return names;
}

Dataset make_synthetic_shapes(int count, int size, uint64_t seed, const TagDictionary& dict) {
  if (count < 1 || size < 4) throw std::invalid_argument("synthetic dataset needs count >= 1, size >= 4");
  Rng rng(seed);
  Dataset d;
  d.images = Tensor({count, 3, size, size});
  constexpr int kSuper = 4;
  for (int n = 0; n < count; ++n) {
    std::vector<int> ids;
    const bool dark = rng.bernoulli(0.5);
    ids.push_back(dict.id(dark ? "dark_background" : "light_background"));
    const double base = dark ? rng.uniform(0.05, 0.25) : rng.uniform(0.6, 0.8);
    const double tilt = rng.uniform(-0.15, 0.15);
    const double tint[3] = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                            rng.uniform(-0.05, 0.05)};
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
          d.images.at(n, c, i, j) = std::clamp(base + tint[c] + tilt * (i / (size - 1.0) - 0.5), 0.0, 1.0);
        }
    const int objects = rng.uniform_int(1, 2);
    for (int o = 0; o < objects; ++o) {
      const int shape = rng.uniform_int(0, static_cast<int>(kShapes.size()) - 1);
      const Color& col = kColors[rng.uniform_int(0, static_cast<int>(kColors.size()) - 1)];
      ids.push_back(dict.id(kShapes[shape]));
      ids.push_back(dict.id(col.name));
      const double r = size * rng.uniform(0.18, 0.3);
      const double cx = rng.uniform(r, size - r), cy = rng.uniform(r, size - r);
      const double rgb[3] = {col.r, col.g, col.b};
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
          int hits = 0;
          for (int a = 0; a < kSuper; ++a)
            for (int b = 0; b < kSuper; ++b) {
              const double y = i + (a + 0.5) / kSuper, x = j + (b + 0.5) / kSuper;
              hits += inside(shape, x - cx, y - cy, r);
            }
          if (!hits) continue;
          const double cover = hits / static_cast<double>(kSuper * kSuper);
          for (int c = 0; c < 3; ++c) {
            double& v = d.images.at(n, c, i, j);
            v = (1 - cover) * v + cover * rgb[c];
          }
        }
    }
    d.tags.emplace_back(ids);
    d.names.push_back("shapes_" + std::to_string(n));
  }
  return d;
}

Dataset load_image_folder(const std::string& dir, int size, int count, uint64_t seed) {
  const std::vector<std::string> files = list_images(dir);
  if (files.empty()) throw ImageError("no .png or .ppm images in " + dir);
  if (count < 1) throw std::invalid_argument("folder dataset count must be positive");
  Rng rng(seed);
  Dataset d;
  d.images = Tensor({count, 3, size, size});
  std::vector<Tensor> cache(files.size());
  for (int n = 0; n < count; ++n) {
    const size_t f = n % files.size();
    if (cache[f].empty()) cache[f] = read_image(files[f]);
    const Tensor& img = cache[f];
    const int h = img.dim(2), w = img.dim(3);
    if (h < size || w < size) {
      throw ImageError(files[f] + " is smaller than the " + std::to_string(size) + " pixel patch");
    }
    const int top = rng.uniform_int(0, h - size), left = rng.uniform_int(0, w - size);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) d.images.at(n, c, i, j) = img.at(0, c, top + i, left + j);
    d.tags.emplace_back();
    d.names.push_back(files[f] + "@" + std::to_string(top) + "," + std::to_string(left));
  }
  return d;
}

BatchSampler::BatchSampler(int n, int batch, uint64_t seed)
    : n_(n), batch_(batch), rng_(seed), order_(n) {
  if (n < 1 || batch < 1) throw std::invalid_argument("batch sampler needs n >= 1 and batch >= 1");
  std::iota(order_.begin(), order_.end(), 0);
  pos_ = order_.size();
}

std::vector<int> BatchSampler::next() {
  std::vector<int> out;
  out.reserve(batch_);
  while (static_cast<int>(out.size()) < batch_) {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_.engine());
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

}  // namespace diffcodec
