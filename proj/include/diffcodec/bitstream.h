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

// .dicmh container. Wire format, all multi-byte integers big-endian:
//
//   offset  size  field
//   0       4     magic "DICM"
//   4       1     version (= 1)
//   5       1     quality index, 0..4
//   6       2     width
//   8       2     height
//   10      1     tag count k
//   11      ceil(13k/8)  tag ids, 13 bits each, MSB first, ascending, zero padded
//   ..      4     hyper section length, then the hyper bytes
//   ..      4     main section length, then the main bytes
//
// Nothing may follow the main section.

#ifndef DIFFCODEC_BITSTREAM_H_
#define DIFFCODEC_BITSTREAM_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffcodec/tagging.h"

namespace diffcodec {

inline constexpr char kMagic[4] = {'D', 'I', 'C', 'M'};
inline constexpr uint8_t kBitstreamVersion = 1;
inline constexpr int kQualityLevels = 5;
inline constexpr size_t kFixedHeaderBytes = 11;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagic : public ParseError {
 public:
  using ParseError::ParseError;
};
class UnknownVersion : public ParseError {
 public:
  using ParseError::ParseError;
};
class TruncatedStream : public ParseError {
 public:
  TruncatedStream(std::string section, const std::string& detail)
      : ParseError("stream truncated in " + section + " section: " + detail),
        section_(std::move(section)) {}
  const std::string& section() const { return section_; }

 private:
  std::string section_;
};
class PaddingError : public ParseError {
 public:
  using ParseError::ParseError;
};
class InvalidHeader : public ParseError {
 public:
  using ParseError::ParseError;
};
class TrailingData : public ParseError {
 public:
  using ParseError::ParseError;
};

struct Container {
  uint8_t version = kBitstreamVersion;
  uint8_t quality = 0;
  uint16_t width = 0;
  uint16_t height = 0;
  TagSet tags;
  std::vector<uint8_t> hyper;
  std::vector<uint8_t> main;

  bool operator==(const Container&) const = default;
};

// Throws OutOfRange for a tag id >= 8192 and InvalidHeader for zero
// dimensions, a quality index outside 0..4 or more than 255 tags.
std::vector<uint8_t> assemble(const Container& c);
Container parse(std::span<const uint8_t> bytes);

// Exact container size in bits for k tags and the given section sizes.
size_t container_bits(size_t tag_count, size_t hyper_bytes, size_t main_bytes);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace diffcodec

#endif  // DIFFCODEC_BITSTREAM_H_
