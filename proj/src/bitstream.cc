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

#include "diffcodec/bitstream.h"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace diffcodec {

namespace {

void put_be(std::vector<uint8_t>& out, uint32_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  std::span<const uint8_t> take(size_t n, const char* section) {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedStream(section, "need " + std::to_string(n) + " bytes, " +
                                         std::to_string(bytes_.size() - pos_) + " left");
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  uint32_t be(int n, const char* section) {
    uint32_t v = 0;
    for (uint8_t b : take(n, section)) v = (v << 8) | b;
    return v;
  }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> assemble(const Container& c) {
  if (c.width == 0 || c.height == 0) throw InvalidHeader("width and height must be positive");
  if (c.quality >= kQualityLevels) {
    throw InvalidHeader("quality index " + std::to_string(c.quality) + " outside 0..4");
  }
  if (c.tags.size() > 255) {
    throw InvalidHeader("at most 255 tags fit the count byte, got " + std::to_string(c.tags.size()));
  }
  const PackedBits tag_bits = encode_tag_ids(c.tags);  // throws OutOfRange
  std::vector<uint8_t> out;
  out.reserve(container_bits(c.tags.size(), c.hyper.size(), c.main.size()) / 8);
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(c.version);
  out.push_back(c.quality);
  put_be(out, c.width, 2);
  put_be(out, c.height, 2);
  out.push_back(static_cast<uint8_t>(c.tags.size()));
  out.insert(out.end(), tag_bits.bytes.begin(), tag_bits.bytes.end());
  put_be(out, static_cast<uint32_t>(c.hyper.size()), 4);
  out.insert(out.end(), c.hyper.begin(), c.hyper.end());
  put_be(out, static_cast<uint32_t>(c.main.size()), 4);
  out.insert(out.end(), c.main.begin(), c.main.end());
  return out;
}

Container parse(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  Container c;
  const size_t head = std::min<size_t>(bytes.size(), 4);
  if (!std::equal(bytes.begin(), bytes.begin() + head, kMagic) || head < 4) {
    // A short prefix of the right magic is still a truncation.
    if (std::equal(bytes.begin(), bytes.begin() + head, kMagic)) {
      throw TruncatedStream("header", "magic incomplete");
    }
    throw BadMagic("not a DICM stream");
  }
  r.take(4, "header");
  c.version = static_cast<uint8_t>(r.be(1, "header"));
  if (c.version != kBitstreamVersion) {
    throw UnknownVersion("bitstream version " + std::to_string(c.version) + " is not supported");
  }
  c.quality = static_cast<uint8_t>(r.be(1, "header"));
  c.width = static_cast<uint16_t>(r.be(2, "header"));
  c.height = static_cast<uint16_t>(r.be(2, "header"));
  const size_t k = r.be(1, "header");
  if (c.quality >= kQualityLevels) {
    throw InvalidHeader("quality index " + std::to_string(c.quality) + " outside 0..4");
  }
  if (c.width == 0 || c.height == 0) throw InvalidHeader("zero image dimension");

  const size_t tag_bits = k * kTagBits;
  const auto tag_bytes = r.take((tag_bits + 7) / 8, "tags");
  if (tag_bits % 8 != 0) {
    const uint8_t mask = static_cast<uint8_t>(0xFFu >> (tag_bits % 8));
    if (tag_bytes.back() & mask) throw PaddingError("nonzero padding bits after tag ids");
  }
  c.tags = decode_tag_ids(tag_bytes, k);
  if (c.tags.size() != k) throw InvalidHeader("tag ids not strictly ascending");
  // decode sorts; require the wire order to already be ascending.
  if (encode_tag_ids(c.tags).bytes != std::vector<uint8_t>(tag_bytes.begin(), tag_bytes.end())) {
    throw InvalidHeader("tag ids not strictly ascending");
  }

  const size_t hyper_len = r.be(4, "hyper_len");
  const auto hyper = r.take(hyper_len, "hyper");
  c.hyper.assign(hyper.begin(), hyper.end());
  const size_t main_len = r.be(4, "main_len");
  const auto main = r.take(main_len, "main");
  c.main.assign(main.begin(), main.end());
  if (r.remaining() != 0) {
    throw TrailingData(std::to_string(r.remaining()) + " bytes after the main section");
  }
  return c;
}

size_t container_bits(size_t tag_count, size_t hyper_bytes, size_t main_bytes) {
  const size_t tag_bits = tag_count * kTagBits;
  return 8 * kFixedHeaderBytes + (tag_bits + 7) / 8 * 8 + 32 + 8 * hyper_bytes + 32 +
         8 * main_bytes;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace diffcodec
