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

#include "diffcodec/tagging.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace diffcodec {

TagDictionary::TagDictionary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() > static_cast<size_t>(kMaxTags)) {
    throw OutOfRange("tag dictionary holds " + std::to_string(names_.size()) +
                     " entries; the 13-bit id space allows at most 8192");
  }
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw std::invalid_argument("empty tag name at id " + std::to_string(i));
    if (!ids_.emplace(names_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate tag '" + names_[i] + "'");
    }
  }
}

TagDictionary TagDictionary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tag dictionary " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  while (!names.empty() && names.back().empty()) names.pop_back();
  return TagDictionary(std::move(names));
}

int TagDictionary::id(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw OutOfRange("unknown tag '" + name + "'");
  return it->second;
}

const std::string& TagDictionary::name(int id) const {
  if (id < 0 || id >= size()) {
    throw OutOfRange("tag id " + std::to_string(id) + " outside dictionary of " +
                     std::to_string(size()));
  }
  return names_[id];
}

TagSet::TagSet(std::vector<int> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  if (!ids_.empty() && ids_.front() < 0) {
    throw OutOfRange("negative tag id " + std::to_string(ids_.front()));
  }
}

std::string TagSet::to_string(const TagDictionary* dict) const {
  std::ostringstream os;
  for (size_t i = 0; i < ids_.size(); ++i) {
    if (i) os << ',';
    if (dict) {
      os << dict->name(ids_[i]);
    } else {
      os << ids_[i];
    }
  }
  return os.str();
}

PackedBits encode_tag_ids(const TagSet& tags) {
  PackedBits out;
  out.bit_count = tags.size() * kTagBits;
  out.bytes.assign((out.bit_count + 7) / 8, 0);
  size_t bit = 0;
  for (int id : tags.ids()) {
    if (id >= kMaxTags) {
      throw OutOfRange("tag id " + std::to_string(id) + " exceeds the maximum of 8192 tags");
    }
    for (int b = kTagBits - 1; b >= 0; --b, ++bit) {
      if ((id >> b) & 1) out.bytes[bit / 8] |= static_cast<uint8_t>(0x80u >> (bit % 8));
    }
  }
  return out;
}

TagSet decode_tag_ids(std::span<const uint8_t> bytes, size_t count) {
  if (bytes.size() * 8 < count * kTagBits) {
    throw OutOfRange("tag payload of " + std::to_string(bytes.size()) + " bytes cannot hold " +
                     std::to_string(count) + " ids");
  }
  std::vector<int> ids(count);
  size_t bit = 0;
  for (size_t i = 0; i < count; ++i) {
    int v = 0;
    for (int b = 0; b < kTagBits; ++b, ++bit) v = (v << 1) | ((bytes[bit / 8] >> (7 - bit % 8)) & 1);
    ids[i] = v;
  }
  return TagSet(std::move(ids));
}

TagSet dropout_tags(const TagSet& tags, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1]");
  if (p == 0.0) return tags;
  return rng.bernoulli(p) ? TagSet() : tags;
}

TagConditioner::TagConditioner(int dictionary_size, int dim, Rng& rng)
    : dictionary_size_(dictionary_size), dim_(dim) {
  table_ = Var(Tensor::randn({dictionary_size + 1, dim}, rng, 1.0 / std::sqrt(double(dim))), true);
}

Var TagConditioner::forward(const std::vector<TagSet>& batch) const {
  std::vector<std::vector<int>> groups;
  groups.reserve(batch.size());
  for (const TagSet& t : batch) {
    if (t.empty()) {
      groups.push_back({dictionary_size_});
      continue;
    }
    if (t.ids().back() >= dictionary_size_) {
      throw OutOfRange("tag id " + std::to_string(t.ids().back()) + " outside dictionary of " +
                       std::to_string(dictionary_size_));
    }
    groups.push_back(t.ids());
  }
  return ops::embedding_bag(table_, groups);
}

void TagConditioner::collect(NamedParams& out, const std::string& prefix) {
  out.emplace_back(prefix + ".table", &table_);
}

uint64_t image_hash(const Tensor& images, int index) {
  // FNV-1a over the item's doubles, quantized to 8-bit pixel levels so that a
  // PNG round trip of the same image maps to the same key.
  const size_t per = images.size() / images.dim(0);
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < per; ++i) {
    const double v = std::clamp(images[index * per + i], 0.0, 1.0);
    const uint8_t q = static_cast<uint8_t>(std::lround(v * 255.0));
    h = (h ^ q) * 1099511628211ull;
  }
  return h;
}

void LabelOracle::add(const Tensor& image, TagSet tags) {
  labels_[image_hash(image, 0)] = std::move(tags);
}

std::vector<TagSet> LabelOracle::extract(const Tensor& images) const {
  std::vector<TagSet> out;
  for (int i = 0; i < images.dim(0); ++i) {
    auto it = labels_.find(image_hash(images, i));
    out.push_back(it == labels_.end() ? TagSet() : it->second);
  }
  return out;
}

TagClassifier::TagClassifier(int num_tags, int width, Rng& rng)
    : num_tags_(num_tags), width_(width) {
  c1_ = Conv2d(3, width, 3, 1, rng);
  c2_ = Conv2d(width, width, 3, 2, rng);
  c3_ = Conv2d(width, 2 * width, 3, 2, rng);
  head_ = Linear(2 * width, num_tags, rng);
}

Var TagClassifier::logits(const Var& images) const {
  Var h = ops::silu(c1_.forward(images));
  h = ops::silu(c2_.forward(h));
  h = ops::silu(c3_.forward(h));
  return head_.forward(ops::global_avg_pool(h));
}

Var TagClassifier::loss(const Var& images, const std::vector<TagSet>& targets) const {
  const Var l = logits(images);
  Tensor y(l.shape(), 0.0);
  for (size_t n = 0; n < targets.size(); ++n) {
    for (int id : targets[n].ids()) {
      if (id < num_tags_) y[n * num_tags_ + id] = 1.0;
    }
  }
  // softplus(l) - y*l is the logistic loss written without overflow.
  return ops::mean(ops::softplus(l) - Var(y) * l);
}

std::vector<TagSet> TagClassifier::extract(const Tensor& images) const {
  NoGradGuard guard;
  const Tensor l = logits(Var(images)).value();
  std::vector<TagSet> out;
  for (int n = 0; n < l.dim(0); ++n) {
    std::vector<int> ids;
    // sigmoid(l) > 0.5 iff l > 0
    for (int k = 0; k < num_tags_; ++k) {
      if (l[static_cast<size_t>(n) * num_tags_ + k] > 0.0) ids.push_back(k);
    }
    out.emplace_back(std::move(ids));
  }
  return out;
}

void TagClassifier::collect(NamedParams& out, const std::string& prefix) {
  c1_.collect(out, prefix + ".c1");
  c2_.collect(out, prefix + ".c2");
  c3_.collect(out, prefix + ".c3");
  head_.collect(out, prefix + ".head");
}

void TagExtractorRegistry::add(const std::string& name,
                               std::shared_ptr<const TagExtractor> extractor) {
  entries_[name] = std::move(extractor);
}

const TagExtractor& TagExtractorRegistry::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UnregisteredExtractor("no tag extractor named '" + name + "'");
  return *it->second;
}

}  // namespace diffcodec
