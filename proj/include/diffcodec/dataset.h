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


// Training and evaluation image sets: procedurally generated labeled shapes,
// or patches cut from a folder of PNG/PPM files.

#ifndef DIFFCODEC_DATASET_H_
#define DIFFCODEC_DATASET_H_

#include <string>
#include <vector>

#include "diffcodec/tagging.h"
#include "diffcodec/tensor.h"

namespace diffcodec {

struct Dataset {
  Tensor images;             // (N, 3, S, S) in [0, 1]
  std::vector<TagSet> tags;  // ground truth; empty sets when unlabeled
  std::vector<std::string> names;

  int size() const { return images.rank() ? images.dim(0) : 0; }
  Tensor batch(const std::vector<int>& indices) const;
  std::vector<TagSet> batch_tags(const std::vector<int>& indices) const;
  Tensor image(int i) const { return batch_slice(images, i, 1); }
};

// Tag vocabulary used by the synthetic generator, in dictionary order.
const std::vector<std::string>& synthetic_tag_names();

// One or two antialiased shapes (circle, square, triangle, ring) in one of
// seven colors over a dark or light gradient. Tags name every shape, color
// and the background; ids come from `dict`.
Dataset make_synthetic_shapes(int count, int size, uint64_t seed, const TagDictionary& dict);

// `count` random size x size crops from the images in `dir` (cycled in name
// order); unlabeled.
Dataset load_image_folder(const std::string& dir, int size, int count, uint64_t seed);

// Reshuffled pass over [0, n), handing out fixed-size batches.
class BatchSampler {
 public:
  BatchSampler(int n, int batch, uint64_t seed);
  std::vector<int> next();

 private:
  int n_, batch_;
  Rng rng_;
  std::vector<int> order_;
  size_t pos_ = 0;
};

}  // namespace diffcodec

#endif  // DIFFCODEC_DATASET_H_
