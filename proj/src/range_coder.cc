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

#include "diffcodec/range_coder.h"

#include <algorithm>
#include <cmath>

namespace diffcodec {

namespace {

constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;

const CdfTable& pick_table(std::span<const CdfTable> tables, std::span<const int> indexes,
                           size_t i) {
  size_t t;
  if (!indexes.empty()) {
    t = static_cast<size_t>(indexes[i]);
  } else {
    t = tables.size() == 1 ? 0 : i;
  }
  if (t >= tables.size()) {
    throw CodingError("table index " + std::to_string(t) + " outside " +
                      std::to_string(tables.size()) + " tables");
  }
  return tables[t];
}

}  // namespace

void RangeEncoder::encode(uint32_t cum, uint32_t freq, int precision) {
  const uint32_t r = range_ >> precision;
  low_ += cum * r;
  range_ = freq * r;
  normalize();
}

void RangeEncoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeEncoder::encode_bits(uint32_t value, int nbits) {
  if (nbits < 1 || nbits > 16 || value >= (1u << nbits)) {
    throw CodingError("raw value " + std::to_string(value) + " does not fit in " +
                      std::to_string(nbits) + " bits");
  }
  encode(value, 1, nbits);
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 4; ++i) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ <<= 8;
  }
  std::vector<uint8_t> out = std::move(out_);
  out_.clear();
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  return out;
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= bytes_.size()) throw TruncatedCodeStream("range-coded section ended early");
  return bytes_[pos_++];
}

uint32_t RangeDecoder::peek(int precision) {
  range_ >>= precision;
  if (range_ == 0) throw CodingError("range underflow (corrupt stream)");
  const uint32_t v = (code_ - low_) / range_;
  if (v >= (1u << precision)) throw CodingError("decoded target out of range (corrupt stream)");
  return v;
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
  low_ += cum * range_;
  range_ *= freq;
  normalize();
}

void RangeDecoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

uint32_t RangeDecoder::decode_bits(int nbits) {
  const uint32_t v = peek(nbits);
  consume(v, 1);
  return v;
}

void CdfTable::validate() const {
  if (cdf.size() < 2) throw CodingError("cdf table needs at least one bin");
  if (cdf.front() != 0 || cdf.back() != kCdfTotal) {
    throw CodingError("cdf table must start at 0 and end at 2^16");
  }
  for (size_t i = 1; i < cdf.size(); ++i) {
    if (cdf[i] <= cdf[i - 1]) throw CodingError("cdf table not strictly increasing");
  }
  if (has_escape && cdf.size() < 2) throw CodingError("escape table without escape bin");
}

double CdfTable::cost_bits(int v) const {
  auto bin_bits = [&](int i) {
    return kCdfPrecision - std::log2(static_cast<double>(cdf[i + 1] - cdf[i]));
  };
  if (in_direct_range(v)) return bin_bits(v - lo);
  if (!has_escape) return INFINITY;
  return bin_bits(bin_count() - 1) + kEscapeBits;
}

CdfTable quantize_pmf(int lo, std::span<const double> pmf, bool has_escape) {
  const size_t n = pmf.size();
  if (n == 0 || n > kCdfTotal) throw CodingError("pmf size out of range");
  double mass = 0.0;
  for (double p : pmf) mass += std::max(p, 0.0);
  if (!(mass > 0.0)) mass = 1.0;
  const uint32_t spare = kCdfTotal - static_cast<uint32_t>(n);
  std::vector<uint32_t> freq(n);
  std::vector<std::pair<double, size_t>> remainder(n);
  uint32_t total = 0;
  for (size_t i = 0; i < n; ++i) {
    const double share = std::max(pmf[i], 0.0) / mass * spare;
    const double whole = std::floor(share);
    freq[i] = 1 + static_cast<uint32_t>(whole);
    remainder[i] = {share - whole, i};
    total += freq[i];
  }
  // Largest-remainder apportionment of what flooring left over.
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; total < kCdfTotal; k = (k + 1) % n, ++total) ++freq[remainder[k].second];
  CdfTable t;
  t.lo = lo;
  t.has_escape = has_escape;
  t.cdf.resize(n + 1);
  t.cdf[0] = 0;
  for (size_t i = 0; i < n; ++i) t.cdf[i + 1] = t.cdf[i] + freq[i];
  return t;
}

void encode_symbol(RangeEncoder& enc, int value, const CdfTable& table) {
  if (table.in_direct_range(value)) {
    const int i = value - table.lo;
    enc.encode(table.cdf[i], table.cdf[i + 1] - table.cdf[i], kCdfPrecision);
    return;
  }
  if (!table.has_escape || value < kSymbolMin || value > kSymbolMax) {
    throw CodingError("symbol " + std::to_string(value) + " outside table support");
  }
  const int e = table.bin_count() - 1;
  enc.encode(table.cdf[e], table.cdf[e + 1] - table.cdf[e], kCdfPrecision);
  enc.encode_bits(static_cast<uint32_t>(value - kSymbolMin), kEscapeBits);
}

int decode_symbol(RangeDecoder& dec, const CdfTable& table) {
  const uint32_t target = dec.peek(kCdfPrecision);
  auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), target);
  const int i = static_cast<int>(it - table.cdf.begin()) - 1;
  dec.consume(table.cdf[i], table.cdf[i + 1] - table.cdf[i]);
  if (table.has_escape && i == table.bin_count() - 1) {
    const int v = static_cast<int>(dec.decode_bits(kEscapeBits)) + kSymbolMin;
    if (v > kSymbolMax) throw CodingError("escaped symbol outside support (corrupt stream)");
    return v;
  }
  return table.lo + i;
}

std::vector<uint8_t> range_encode(std::span<const int> symbols, std::span<const CdfTable> tables,
                                  std::span<const int> indexes) {
  if (!indexes.empty() && indexes.size() != symbols.size()) {
    throw CodingError("index count does not match symbol count");
  }
  if (!symbols.empty() && indexes.empty() && tables.size() != 1 &&
      tables.size() != symbols.size()) {
    throw CodingError("need one table, or one table per symbol");
  }
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) {
    encode_symbol(enc, symbols[i], pick_table(tables, indexes, i));
  }
  return enc.finish();
}

std::vector<int> range_decode(std::span<const uint8_t> bytes, size_t count,
                              std::span<const CdfTable> tables, std::span<const int> indexes) {
  if (!indexes.empty() && indexes.size() != count) {
    throw CodingError("index count does not match symbol count");
  }
  if (count > 0 && indexes.empty() && tables.size() != 1 && tables.size() != count) {
    throw CodingError("need one table, or one table per symbol");
  }
  RangeDecoder dec(bytes);
  std::vector<int> out(count);
  for (size_t i = 0; i < count; ++i) out[i] = decode_symbol(dec, pick_table(tables, indexes, i));
  if (dec.bytes_consumed() != bytes.size()) {
    throw CodingError("coded section has " + std::to_string(bytes.size() - dec.bytes_consumed()) +
                      " unconsumed trailing bytes");
  }
  return out;
}

}  // namespace diffcodec
