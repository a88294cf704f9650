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

// Carry-less range coder (Subbotin style) over 16-bit cumulative tables.
//
// State is a 32-bit (low, range) pair. Renormalization emits the top byte of
// `low` whenever it is settled, and forcibly shrinks `range` to the next
// 2^16 boundary when it drops below 2^16 without the top byte settling, so no
// carry can ever propagate into bytes already written. The encoder flushes
// all four bytes of `low`; the decoder therefore reads exactly as many bytes
// as were written, and any attempt to read past the end is a truncation.
//
// Byte stream: plain sequence of output bytes, most significant first within
// the 32-bit state. An empty symbol sequence encodes to exactly 4 bytes.

#ifndef DIFFCODEC_RANGE_CODER_H_
#define DIFFCODEC_RANGE_CODER_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcodec {

class CodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when the decoder needs bytes past the end of its input.
class TruncatedCodeStream : public CodingError {
 public:
  using CodingError::CodingError;
};

inline constexpr int kCdfPrecision = 16;
inline constexpr uint32_t kCdfTotal = 1u << kCdfPrecision;
// Support of directly coded integer symbols; escapes code the offset from
// kSymbolMin with kEscapeBits raw bits.
inline constexpr int kSymbolMin = -255;
inline constexpr int kSymbolMax = 255;
inline constexpr int kEscapeBits = 9;

class RangeEncoder {
 public:
  // Encodes the interval [cum, cum + freq) out of 2^precision.
  void encode(uint32_t cum, uint32_t freq, int precision);
  void encode_bits(uint32_t value, int nbits);
  std::vector<uint8_t> finish();

 private:
  void normalize();

  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);

  // Target cumulative value in [0, 2^precision); must be followed by consume().
  uint32_t peek(int precision);
  void consume(uint32_t cum, uint32_t freq);
  uint32_t decode_bits(int nbits);
  size_t bytes_consumed() const { return pos_; }

 private:
  uint8_t next_byte();
  void normalize();

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

// Quantized cumulative table. Bin i (0 <= i < direct_count) codes the value
// lo + i. With has_escape, the final bin is an escape followed by a raw
// kEscapeBits offset, which extends the support to [kSymbolMin, kSymbolMax].
struct CdfTable {
  int lo = 0;
  bool has_escape = false;
  std::vector<uint32_t> cdf;  // cdf.front() == 0, cdf.back() == 2^16, strictly increasing

  int bin_count() const { return static_cast<int>(cdf.size()) - 1; }
  int direct_count() const { return bin_count() - (has_escape ? 1 : 0); }
  bool in_direct_range(int v) const { return v >= lo && v < lo + direct_count(); }
  // Throws CodingError on a malformed table.
  void validate() const;
  // Ideal code length of `v` under this table, including escape bits.
  double cost_bits(int v) const;
};

// Converts a probability mass (one entry per bin, escape last if present)
// into a 16-bit table in which every bin has frequency >= 1.
CdfTable quantize_pmf(int lo, std::span<const double> pmf, bool has_escape);

void encode_symbol(RangeEncoder& enc, int value, const CdfTable& table);
int decode_symbol(RangeDecoder& dec, const CdfTable& table);

// Codes symbol i with tables[indexes[i]]; an empty `indexes` means
// tables[i] (one table per symbol) or tables[0] when only one table exists.
std::vector<uint8_t> range_encode(std::span<const int> symbols, std::span<const CdfTable> tables,
                                  std::span<const int> indexes = {});
std::vector<int> range_decode(std::span<const uint8_t> bytes, size_t count,
                              std::span<const CdfTable> tables, std::span<const int> indexes = {});

}  // namespace diffcodec

#endif  // DIFFCODEC_RANGE_CODER_H_
