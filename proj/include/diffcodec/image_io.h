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


// PNG and PPM reading and writing. Images are (1, 3, H, W) tensors in [0, 1];
// the format follows the file extension.

#ifndef DIFFCODEC_IMAGE_IO_H_
#define DIFFCODEC_IMAGE_IO_H_

#include <stdexcept>
#include <string>
#include <vector>

#include "diffcodec/tensor.h"

namespace diffcodec {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Tensor read_image(const std::string& path);
// Values are clamped to [0, 1] and rounded to 8 bits.
void write_image(const std::string& path, const Tensor& image);

Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

bool is_image_path(const std::string& path);
// Image files directly inside `dir`, sorted by name.
std::vector<std::string> list_images(const std::string& dir);

// Rounds to the 8-bit grid that write_image stores.
Tensor quantize_8bit(const Tensor& image);

}  // namespace diffcodec

#endif  // DIFFCODEC_IMAGE_IO_H_
