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


#include "diffcodec/image_io.h"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace diffcodec {

namespace {

std::string extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

void check_image(const Tensor& image) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3 || image.dim(2) < 1 ||
      image.dim(3) < 1) {
    throw ImageError("expected an image tensor (1, 3, H, W), got " + shape_string(image.shape()));
  }
}

uint8_t to_byte(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Tensor from_interleaved(const uint8_t* rgb, int h, int w) {
  Tensor out({1, 3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out.at(0, c, i, j) = rgb[(i * w + j) * 3 + c] / 255.0;
  return out;
}

std::vector<uint8_t> to_interleaved(const Tensor& image) {
  const int h = image.dim(2), w = image.dim(3);
  std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) rgb[(i * w + j) * 3 + c] = to_byte(image.at(0, c, i, j));
  return rgb;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path);
  const std::string magic = ppm_token(in);
  if (magic != "P6" && magic != "P3") throw ImageError(path + ": not a P3/P6 PPM file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ppm_token(in));
    h = std::stoi(ppm_token(in));
    maxval = std::stoi(ppm_token(in));
  } catch (const std::exception&) {
    throw ImageError(path + ": malformed PPM header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw ImageError(path + ": bad PPM header");
  Tensor out({1, 3, h, w});
  const size_t n = static_cast<size_t>(w) * h * 3;
  std::vector<double> vals(n);
  if (magic == "P6") {
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(n * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) throw ImageError(path + ": truncated PPM data");
    for (size_t i = 0; i < n; ++i) {
      vals[i] = bytes == 1 ? raw[i] : (raw[2 * i] << 8 | raw[2 * i + 1]);
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      const std::string tok = ppm_token(in);
      if (tok.empty()) throw ImageError(path + ": truncated PPM data");
      vals[i] = std::stoi(tok);
    }
  }
  for (size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3), px = static_cast<int>(i / 3);
    out.at(0, c, px / w, px % w) = std::min(vals[i], static_cast<double>(maxval)) / maxval;
  }
  return out;
}

void write_ppm(const std::string& path, const Tensor& image) {
  check_image(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path);
  out << "P6\n" << image.dim(3) << " " << image.dim(2) << "\n255\n";
  const std::vector<uint8_t> rgb = to_interleaved(image);
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw ImageError("failed writing " + path);
}

Tensor read_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageError(path + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageError(path + ": " + img.message);
  }
  return from_interleaved(buf.data(), static_cast<int>(img.height), static_cast<int>(img.width));
}

void write_png(const std::string& path, const Tensor& image) {
  check_image(image);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(3));
  img.height = static_cast<png_uint_32>(image.dim(2));
  img.format = PNG_FORMAT_RGB;
  const std::vector<uint8_t> rgb = to_interleaved(image);
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw ImageError(path + ": " + img.message);
  }
}

Tensor read_image(const std::string& path) {
  const std::string ext = extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  throw ImageError("unsupported image format '" + ext + "' (use .png or .ppm)");
}

void write_image(const std::string& path, const Tensor& image) {
  const std::string ext = extension(path);
  if (ext == ".png") return write_png(path, image);
  if (ext == ".ppm") return write_ppm(path, image);
  throw ImageError("unsupported image format '" + ext + "' (use .png or .ppm)");
}

bool is_image_path(const std::string& path) {
  const std::string ext = extension(path);
  return ext == ".png" || ext == ".ppm";
}

std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ImageError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_path(e.path().string())) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor quantize_8bit(const Tensor& image) {
  Tensor out = image;
  for (double& v : out.data()) v = to_byte(v) / 255.0;
  return out;
}

}  // namespace diffcodec
