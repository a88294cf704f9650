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

// Checkpoint container.
//
// Layout (all integers little-endian):
//   "DCKP"  u32 version (=1)
//   u32 metadata count, then per entry: u32 len + key bytes, u32 len + value bytes
//   u32 tensor count, then per tensor: u32 len + name bytes, u32 rank,
//       rank x i32 extents, prod(extents) x f64 values
//
// Metadata carries the architecture configuration, the latent scale constant
// and the quality index, so a checkpoint alone suffices to rebuild a model.

#ifndef DIFFCODEC_ARCHIVE_H_
#define DIFFCODEC_ARCHIVE_H_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffcodec/tensor.h"

namespace diffcodec {

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Round-trippable text form of a double for metadata values.
std::string format_exact(double v);

class TensorArchive {
 public:
  static constexpr uint32_t kVersion = 1;

  void put(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }
  bool has(const std::string& name) const { return tensors_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;

  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
  bool has_meta(const std::string& key) const { return meta_.count(key) > 0; }
  const std::string& meta(const std::string& key) const;
  const std::map<std::string, std::string>& all_meta() const { return meta_; }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  std::vector<uint8_t> serialize() const;
  static TensorArchive deserialize(const std::vector<uint8_t>& bytes);

  void save(const std::string& path) const;
  static TensorArchive load(const std::string& path);

 private:
  std::map<std::string, std::string> meta_;
  std::map<std::string, Tensor> tensors_;
};

}  // namespace diffcodec

#endif  // DIFFCODEC_ARCHIVE_H_
