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

#include "diffcodec/archive.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace diffcodec {

std::string format_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}


static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'C', 'K', 'P'};

template <class T>
void put_pod(std::vector<uint8_t>& out, T v) {
  uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

void put_string(std::vector<uint8_t>& out, const std::string& s) {
  put_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : bytes_(b) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string string() {
    const uint32_t n = pod<uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw ArchiveError("checkpoint truncated");
  }

  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
};

}  // namespace

const Tensor& TensorArchive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ArchiveError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

const std::string& TensorArchive::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw ArchiveError("checkpoint has no metadata key '" + key + "'");
  return it->second;
}

std::vector<uint8_t> TensorArchive::serialize() const {
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  put_pod<uint32_t>(out, kVersion);
  put_pod<uint32_t>(out, static_cast<uint32_t>(meta_.size()));
  for (const auto& [k, v] : meta_) {
    put_string(out, k);
    put_string(out, v);
  }
  put_pod<uint32_t>(out, static_cast<uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    put_string(out, name);
    put_pod<uint32_t>(out, static_cast<uint32_t>(t.rank()));
    for (int d : t.shape()) put_pod<int32_t>(out, d);
    const auto* p = reinterpret_cast<const uint8_t*>(t.ptr());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  }
  return out;
}

TensorArchive TensorArchive::deserialize(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ArchiveError("not a diffcodec checkpoint (bad magic)");
  }
  std::vector<uint8_t> body(bytes.begin() + 4, bytes.end());
  Reader r(body);
  const uint32_t version = r.pod<uint32_t>();
  if (version != kVersion) {
    throw ArchiveError("unsupported checkpoint version " + std::to_string(version));
  }
  TensorArchive a;
  const uint32_t n_meta = r.pod<uint32_t>();
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.string();
    a.meta_[k] = r.string();
  }
  const uint32_t n_tensors = r.pod<uint32_t>();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.string();
    const uint32_t rank = r.pod<uint32_t>();
    if (rank > 8) throw ArchiveError("implausible rank for tensor '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.pod<int32_t>();
      if (d < 0) throw ArchiveError("negative extent in tensor '" + name + "'");
    }
    Tensor t(shape);
    r.raw(t.ptr(), t.size() * sizeof(double));
    a.tensors_[name] = std::move(t);
  }
  if (!r.done()) throw ArchiveError("trailing bytes after checkpoint payload");
  return a;
}

void TensorArchive::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArchiveError("cannot open '" + path + "' for writing");
  const auto bytes = serialize();
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ArchiveError("write failed for '" + path + "'");
}

TensorArchive TensorArchive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArchiveError("cannot open checkpoint '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace diffcodec
