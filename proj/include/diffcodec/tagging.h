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

// Word-level image tags: dictionary, 13-bit fixed-length id packing, CFG
// dropout, embedding-sum conditioning and pluggable extractors.

#ifndef DIFFCODEC_TAGGING_H_
#define DIFFCODEC_TAGGING_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "diffcodec/layers.h"

namespace diffcodec {

inline constexpr int kTagBits = 13;
inline constexpr int kMaxTags = 1 << kTagBits;  // 8192 ids: 0 .. 8191

class OutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class TagDictionary {
 public:
  TagDictionary() = default;
  // Throws on duplicates, empty names or more than kMaxTags entries.
  explicit TagDictionary(std::vector<std::string> names);
  // UTF-8 text, one tag per line, line number = id. Blank trailing lines ignored.
  static TagDictionary load(const std::string& path);

  int size() const { return static_cast<int>(names_.size()); }
  int id(const std::string& name) const;  // OutOfRange if unknown
  bool contains(const std::string& name) const { return ids_.count(name) > 0; }
  const std::string& name(int id) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

// Sorted, duplicate-free tag ids. An empty set is the unconditional (EMPTY)
// condition.
class TagSet {
 public:
  TagSet() = default;
  explicit TagSet(std::vector<int> ids);

  const std::vector<int>& ids() const { return ids_; }
  size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool operator==(const TagSet& o) const { return ids_ == o.ids_; }

  std::string to_string(const TagDictionary* dict = nullptr) const;

 private:
  std::vector<int> ids_;
};

struct PackedBits {
  std::vector<uint8_t> bytes;  // zero padded to a byte boundary
  size_t bit_count = 0;        // exactly kTagBits * number of ids
};

// MSB-first 13-bit packing in ascending id order.
PackedBits encode_tag_ids(const TagSet& tags);
// Reads `count` ids from the first 13*count bits of `bytes`.
TagSet decode_tag_ids(std::span<const uint8_t> bytes, size_t count);

// With probability p the whole set becomes EMPTY, otherwise it is unchanged.
TagSet dropout_tags(const TagSet& tags, double p, Rng& rng);

// Sum of learned per-tag embeddings; EMPTY maps to a dedicated null row
// (row index = dictionary size).
class TagConditioner {
 public:
  TagConditioner() = default;
  TagConditioner(int dictionary_size, int dim, Rng& rng);

  int dictionary_size() const { return dictionary_size_; }
  int dim() const { return dim_; }
  // One TagSet per batch item -> (N, dim).
  Var forward(const std::vector<TagSet>& batch) const;
  void collect(NamedParams& out, const std::string& prefix);

 private:
  int dictionary_size_ = 0, dim_ = 0;
  Var table_;
};

// Image batch (N, 3, H, W) -> one TagSet per item.
class TagExtractor {
 public:
  virtual ~TagExtractor() = default;
  virtual std::vector<TagSet> extract(const Tensor& images) const = 0;
};

// Ground-truth labels for a labeled toy dataset, looked up by image content.
class LabelOracle : public TagExtractor {
 public:
  void add(const Tensor& image, TagSet tags);
  std::vector<TagSet> extract(const Tensor& images) const override;
  size_t size() const { return labels_.size(); }

 private:
  std::map<uint64_t, TagSet> labels_;
};

uint64_t image_hash(const Tensor& images, int index);

// Small multi-label CNN, thresholded at 0.5 per tag.
class TagClassifier : public TagExtractor {
 public:
  TagClassifier() = default;
  TagClassifier(int num_tags, int width, Rng& rng);

  // (N, 3, H, W) -> (N, num_tags) logits.
  Var logits(const Var& images) const;
  // Mean binary cross-entropy against multi-hot targets.
  Var loss(const Var& images, const std::vector<TagSet>& targets) const;
  std::vector<TagSet> extract(const Tensor& images) const override;
  int num_tags() const { return num_tags_; }
  int width() const { return width_; }

  void collect(NamedParams& out, const std::string& prefix);

 private:
  int num_tags_ = 0, width_ = 0;
  Conv2d c1_, c2_, c3_;
  Linear head_;
};

class UnregisteredExtractor : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TagExtractorRegistry {
 public:
  void add(const std::string& name, std::shared_ptr<const TagExtractor> extractor);
  const TagExtractor& get(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) > 0; }

 private:
  std::map<std::string, std::shared_ptr<const TagExtractor>> entries_;
};

}  // namespace diffcodec

#endif  // DIFFCODEC_TAGGING_H_
