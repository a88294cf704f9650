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


// Python bindings. Arrays cross the boundary as float64 numpy arrays; images
// are (H, W, 3) in [0, 1].

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "diffcodec/bitstream.h"
#include "diffcodec/diffusion.h"
#include "diffcodec/entropy_model.h"
#include "diffcodec/image_io.h"
#include "diffcodec/range_coder.h"
#include "diffcodec/semantics.h"
#include "diffcodec/tagging.h"
#include "diffcodec/training.h"

namespace py = pybind11;
using namespace diffcodec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

// (H, W, 3) <-> (1, 3, H, W)
Tensor image_from_hwc(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("expected an (H, W, 3) array");
  const int h = a.shape(0), w = a.shape(1);
  Tensor t({1, 3, h, w});
  auto r = a.unchecked<3>();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) t[(static_cast<size_t>(c) * h + y) * w + x] = r(y, x, c);
  return t;
}

Array image_to_hwc(const Tensor& t) {
  const int h = t.dim(2), w = t.dim(3);
  Array out({h, w, 3});
  auto o = out.mutable_unchecked<3>();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) o(y, x, c) = t[(static_cast<size_t>(c) * h + y) * w + x];
  return out;
}

py::bytes as_bytes(const std::vector<uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::vector<uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return std::vector<uint8_t>(s.begin(), s.end());
}

std::vector<CdfTable> gaussian_tables(const Array& means, const Array& scales) {
  if (means.size() != scales.size()) throw std::invalid_argument("means and scales differ in size");
  return build_gaussian_tables(std::span<const double>(means.data(), means.size()),
                               std::span<const double>(scales.data(), scales.size()));
}

class Codec {
 public:
  explicit Codec(const std::string& path) : m_(CodecModel::load(path)) {}
  int quality() const { return m_->quality; }
  double lambda_rate() const { return m_->lambda_rate; }
  int size_multiple() const { return m_->size_multiple(); }

  py::bytes encode(const Array& image, std::optional<std::vector<int>> tags) const {
    const Tensor x = image_from_hwc(image);
    std::optional<TagSet> t;
    if (tags) t = TagSet(*tags);
    return as_bytes(encode_image(*m_, x, t ? &*t : nullptr).bytes);
  }

  py::dict decode(const py::bytes& stream, int steps, double cfg_scale, uint64_t seed) const {
    SamplingOptions o{steps, cfg_scale, seed};
    const DecodeResult r = decode_image(*m_, from_bytes(stream), o);
    py::dict d;
    d["image"] = image_to_hwc(r.image);
    d["z_hat"] = to_array(r.z_hat);
    d["z_rec"] = to_array(r.z_rec);
    d["tags"] = r.tags.ids();
    d["evaluations"] = r.evaluations;
    return d;
  }

  std::vector<std::string> tag_names(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int id : ids) out.push_back(m_->dictionary.name(id));
    return out;
  }

 private:
  std::unique_ptr<CodecModel> m_;
};

}  // namespace

PYBIND11_MODULE(_diffcodec, m) {
  m.doc() = "Diffusion-based image codec with tag side information";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<CodingError>(m, "CodingError", PyExc_ValueError);
  py::register_exception<OutOfRange>(m, "TagOutOfRange", PyExc_ValueError);

  // Entropy coding.
  m.def("rate_gaussian",
        [](const Array& v, const Array& mean, const Array& scale) {
          return rate_gaussian(to_tensor(v), to_tensor(mean), to_tensor(scale)).total_bits;
        },
        py::arg("values"), py::arg("mean"), py::arg("scale"));
  m.def("gaussian_likelihood", &gaussian_likelihood, py::arg("v"), py::arg("mean"),
        py::arg("scale"));
  m.def("range_encode_gaussian",
        [](const std::vector<int>& symbols, const Array& means, const Array& scales) {
          if (symbols.size() != static_cast<size_t>(means.size())) {
            throw std::invalid_argument("one mean and scale per symbol");
          }
          return as_bytes(range_encode(symbols, gaussian_tables(means, scales)));
        },
        py::arg("symbols"), py::arg("means"), py::arg("scales"));
  m.def("range_decode_gaussian",
        [](const py::bytes& data, const Array& means, const Array& scales) {
          return range_decode(from_bytes(data), means.size(), gaussian_tables(means, scales));
        },
        py::arg("data"), py::arg("means"), py::arg("scales"));

  // Tags and container.
  m.attr("TAG_BITS") = kTagBits;
  m.attr("MAX_TAGS") = kMaxTags;
  m.def("encode_tag_ids",
        [](const std::vector<int>& ids) {
          const PackedBits p = encode_tag_ids(TagSet(ids));
          return py::make_tuple(as_bytes(p.bytes), p.bit_count);
        },
        py::arg("ids"));
  m.def("decode_tag_ids",
        [](const py::bytes& b, size_t count) { return decode_tag_ids(from_bytes(b), count).ids(); },
        py::arg("data"), py::arg("count"));
  m.def("assemble",
        [](int quality, int width, int height, const std::vector<int>& tags, const py::bytes& hyper,
           const py::bytes& main) {
          Container c;
          c.quality = static_cast<uint8_t>(quality);
          c.width = static_cast<uint16_t>(width);
          c.height = static_cast<uint16_t>(height);
          c.tags = TagSet(tags);
          c.hyper = from_bytes(hyper);
          c.main = from_bytes(main);
          return as_bytes(assemble(c));
        },
        py::arg("quality"), py::arg("width"), py::arg("height"), py::arg("tags"),
        py::arg("hyper"), py::arg("main"));
  m.def("parse",
        [](const py::bytes& b) {
          const Container c = parse(from_bytes(b));
          py::dict d;
          d["version"] = c.version;
          d["quality"] = c.quality;
          d["width"] = c.width;
          d["height"] = c.height;
          d["tags"] = c.tags.ids();
          d["hyper"] = as_bytes(c.hyper);
          d["main"] = as_bytes(c.main);
          return d;
        },
        py::arg("data"));

  // Diffusion.
  m.def("alpha_bar",
        [](int T) { return NoiseSchedule::make(T).alpha_bar; }, py::arg("T") = 1000);
  m.def("ddim_timesteps", &ddim_timesteps, py::arg("T"), py::arg("steps"));
  m.def("cfg_combine",
        [](const Array& c, const Array& u, double s) {
          return to_array(cfg_combine(to_tensor(c), to_tensor(u), s));
        },
        py::arg("eps_cond"), py::arg("eps_uncond"), py::arg("scale"));
  m.def("sc_loss",
        [](const Array& f, const Array& g) {
          return sc_loss({Var(to_tensor(f)), Site::kMid}, {Var(to_tensor(g)), Site::kMid})
              .value()
              .item();
        },
        py::arg("features"), py::arg("features_hat"));

  // Images.
  m.def("read_image", [](const std::string& p) { return image_to_hwc(read_image(p)); },
        py::arg("path"));
  m.def("write_image",
        [](const std::string& p, const Array& a) { write_image(p, image_from_hwc(a)); },
        py::arg("path"), py::arg("image"));
  m.def("psnr",
        [](const Array& a, const Array& b) { return psnr(image_from_hwc(a), image_from_hwc(b)); },
        py::arg("x"), py::arg("x_hat"));

  py::class_<Codec>(m, "Codec")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def_property_readonly("quality", &Codec::quality)
      .def_property_readonly("lambda_rate", &Codec::lambda_rate)
      .def_property_readonly("size_multiple", &Codec::size_multiple)
      .def("encode", &Codec::encode, py::arg("image"), py::arg("tags") = py::none())
      .def("decode", &Codec::decode, py::arg("data"), py::arg("steps") = 50,
           py::arg("cfg_scale") = 5.0, py::arg("seed") = 0)
      .def("tag_names", &Codec::tag_names, py::arg("ids"));

  m.def("train",
        [](const std::string& config, const std::string& stage, std::optional<uint64_t> seed) {
          PipelineConfig cfg = PipelineConfig::from(Config::load(config));
          if (seed) cfg.seed = *seed;
          py::gil_scoped_release release;
          std::vector<std::pair<std::string, double>> out;
          for (const StageReport& r : run_stage(cfg, stage)) {
            out.emplace_back(r.stage, r.losses.empty() ? NAN : r.losses.back());
          }
          return out;
        },
        py::arg("config"), py::arg("stage"), py::arg("seed") = py::none());
}
