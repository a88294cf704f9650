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


#include "diffcodec/pipeline.h"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include "diffcodec/archive.h"

namespace diffcodec {

namespace {

constexpr const char* kFormat = "diffcodec-model";

void check_finite(const Var& v, const char* name) {
  if (v.node() == nullptr) throw TrainingError(std::string("loss component '") + name + "' is unset");
  const Tensor& t = v.value();
  if (t.size() != 1) throw TrainingError(std::string("loss component '") + name + "' is not scalar");
  if (!std::isfinite(t.item())) {
    throw TrainingError(std::string("loss component '") + name + "' is not finite (" +
                        std::to_string(t.item()) + ")");
  }
}

std::vector<int> to_symbols(const Tensor& t, size_t* clamped) {
  std::vector<int> out(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    double v = t[i];
    if (v < kSymbolMin || v > kSymbolMax) {
      ++*clamped;
      v = std::clamp(v, static_cast<double>(kSymbolMin), static_cast<double>(kSymbolMax));
    }
    out[i] = static_cast<int>(v);
  }
  return out;
}

Tensor from_symbols(const std::vector<int>& s, const Shape& shape) {
  Tensor t(shape);
  for (size_t i = 0; i < s.size(); ++i) t[i] = s[i];
  return t;
}

std::vector<int> channel_indexes(const Shape& shape) {
  const size_t plane = static_cast<size_t>(shape[2]) * shape[3];
  std::vector<int> idx(shape_numel(shape));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>((i / plane) % shape[1]);
  return idx;
}

struct Shapes {
  Shape y, zh;
};

Shapes code_shapes(const CodecModel& m, int height, int width) {
  const int div = m.vae.factor() * CodecTransforms::kStride;
  const TransformConfig& c = m.transforms.config();
  return {{1, c.code_channels, height / div, width / div},
          {1, c.hyper_channels, height / (2 * div), width / (2 * div)}};
}

}  // namespace

double lambda_for_quality(int quality) {
  if (quality < 0 || quality >= static_cast<int>(kRateLadder.size())) {
    throw std::out_of_range("quality index " + std::to_string(quality) + " outside 0..4");
  }
  return kRateLadder[quality];
}

Var composite_loss(const LossComponents& c, const LossWeights& w) {
  check_finite(c.rate, "rate");
  check_finite(c.dist, "dist");
  check_finite(c.diff, "diff");
  check_finite(c.sem, "sem");
  return c.rate * w.rate + c.dist * w.dist + c.diff * w.diff + c.sem * w.sem;
}

DistortionSpace parse_distortion_space(const std::string& name) {
  if (name == "latent") return DistortionSpace::kLatent;
  if (name == "pixel") return DistortionSpace::kPixel;
  throw std::invalid_argument("unknown distortion space '" + name + "' (expected latent or pixel)");
}

const char* distortion_space_name(DistortionSpace s) {
  return s == DistortionSpace::kLatent ? "latent" : "pixel";
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_schedule(const NoiseSchedule& s, TensorArchive& a) {
  a.set_meta("schedule.T", std::to_string(s.T));
  a.put("schedule.beta", Tensor({s.T + 1}, s.beta));
}

NoiseSchedule load_schedule(const TensorArchive& a) {
  const Tensor& beta = a.get("schedule.beta");
  NoiseSchedule s;
  s.T = std::stoi(a.meta("schedule.T"));
  if (beta.rank() != 1 || beta.dim(0) != s.T + 1) throw ArchiveError("schedule betas do not match T");
  s.beta = beta.vec();
  s.alpha.assign(s.T + 1, 1.0);
  s.alpha_bar.assign(s.T + 1, 1.0);
  for (int t = 1; t <= s.T; ++t) {
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

void save_unet(UNet& unet, TensorArchive& a, const std::string& prefix) {
  const UNetConfig& c = unet.config();
  a.set_meta(prefix + ".latent_channels", std::to_string(c.latent_channels));
  a.set_meta(prefix + ".width0", std::to_string(c.width0));
  a.set_meta(prefix + ".width1", std::to_string(c.width1));
  a.set_meta(prefix + ".time_dim", std::to_string(c.time_dim));
  a.set_meta(prefix + ".dictionary_size", std::to_string(c.dictionary_size));
  NamedParams p;
  unet.collect(p, prefix);
  save_params(p, a);
}

UNet load_unet(const TensorArchive& a, const std::string& prefix) {
  UNetConfig c;
  c.latent_channels = std::stoi(a.meta(prefix + ".latent_channels"));
  c.width0 = std::stoi(a.meta(prefix + ".width0"));
  c.width1 = std::stoi(a.meta(prefix + ".width1"));
  c.time_dim = std::stoi(a.meta(prefix + ".time_dim"));
  c.dictionary_size = std::stoi(a.meta(prefix + ".dictionary_size"));
  Rng rng(0);
  UNet unet(c, rng);
  NamedParams p;
  unet.collect(p, prefix);
  load_params(p, a);
  return unet;
}

void save_tagger(TagClassifier& tagger, TensorArchive& a, const std::string& prefix) {
  a.set_meta(prefix + ".num_tags", std::to_string(tagger.num_tags()));
  a.set_meta(prefix + ".width", std::to_string(tagger.width()));
  NamedParams p;
  tagger.collect(p, prefix);
  save_params(p, a);
}

TagClassifier load_tagger(const TensorArchive& a, const std::string& prefix) {
  Rng rng(0);
  TagClassifier t(std::stoi(a.meta(prefix + ".num_tags")), std::stoi(a.meta(prefix + ".width")), rng);
  NamedParams p;
  t.collect(p, prefix);
  load_params(p, a);
  return t;
}

void save_dictionary(const TagDictionary& d, TensorArchive& a) {
  std::string joined;
  for (const std::string& n : d.names()) joined += n + "\n";
  a.set_meta("dictionary", joined);
}

TagDictionary load_dictionary(const TensorArchive& a) {
  std::vector<std::string> names;
  std::istringstream in(a.meta("dictionary"));
  std::string line;
  while (std::getline(in, line)) names.push_back(line);
  return TagDictionary(names);
}

void CodecModel::init_codec(const TransformConfig& config, Rng& rng) {
  TransformConfig c = config;
  c.latent_channels = vae.latent_channels();
  c.vae_factor = vae.factor();
  transforms = CodecTransforms(c, rng);
  hyper = Hyperprior(c.code_channels, c.hyper_channels, rng);
  prior = FactorizedPrior(c.hyper_channels, rng);
  control = ControlBranch(denoiser, rng);
}

int CodecModel::size_multiple() const { return vae.factor() * CodecTransforms::kStride * 2; }

void CodecModel::collect_codec(NamedParams& out) {
  transforms.collect(out, "codec");
  hyper.collect(out, "hyper");
  prior.collect(out, "prior");
  control.collect(out, "control");
}

void CodecModel::collect_frozen(NamedParams& out) {
  vae.collect(out, "vae");
  tagger.collect(out, "tagger");
  denoiser.collect(out, "unet");
}

TensorArchive CodecModel::to_archive() {
  TensorArchive a;
  a.set_meta("format", kFormat);
  a.set_meta("kind", "codec");
  a.set_meta("quality", std::to_string(quality));
  a.set_meta("lambda_rate", format_exact(lambda_rate));
  a.set_meta("distortion", distortion_space_name(distortion));
  save_dictionary(dictionary, a);
  vae.save(a, "vae");
  save_tagger(tagger, a, "tagger");
  save_unet(denoiser, a, "unet");
  save_schedule(schedule, a);
  transforms.save(a, "codec");
  NamedParams p;
  hyper.collect(p, "hyper");
  prior.collect(p, "prior");
  control.collect(p, "control");
  save_params(p, a);
  return a;
}

std::unique_ptr<CodecModel> CodecModel::from_archive(const TensorArchive& a) {
  if (!a.has_meta("format") || a.meta("format") != kFormat || a.meta("kind") != "codec") {
    throw ArchiveError("not a codec checkpoint (kind " +
                       (a.has_meta("kind") ? a.meta("kind") : std::string("?")) + ")");
  }
  auto m = std::make_unique<CodecModel>();
  Rng rng(0);
  m->quality = std::stoi(a.meta("quality"));
  m->lambda_rate = std::stod(a.meta("lambda_rate"));
  m->distortion = parse_distortion_space(a.meta("distortion"));
  m->dictionary = load_dictionary(a);
  m->vae = VaeModel(read_vae_config(a, "vae"), rng);
  m->vae.load(a, "vae");
  m->tagger = load_tagger(a, "tagger");
  m->denoiser = load_unet(a, "unet");
  m->schedule = load_schedule(a);
  m->transforms = CodecTransforms(read_transform_config(a, "codec"), rng);
  m->transforms.load(a, "codec");
  const TransformConfig& c = m->transforms.config();
  m->hyper = Hyperprior(c.code_channels, c.hyper_channels, rng);
  m->prior = FactorizedPrior(c.hyper_channels, rng);
  m->control = ControlBranch(m->denoiser, rng);
  NamedParams p;
  m->hyper.collect(p, "hyper");
  m->prior.collect(p, "prior");
  m->control.collect(p, "control");
  load_params(p, a);
  return m;
}

void CodecModel::save(const std::string& path) {
  TensorArchive a = to_archive();
  a.save(path);
}

std::unique_ptr<CodecModel> CodecModel::load(const std::string& path) {
  return from_archive(TensorArchive::load(path));
}

std::unique_ptr<CodecModel> CodecModel::clone() {
  return from_archive(TensorArchive::deserialize(to_archive().serialize()));
}

// ---------------------------------------------------------------------------
// Coding

Var coding_input(const CodecModel& m, const Tensor& x, const Tensor& z) {
  return Var(m.transforms.config().input == InputSpace::kPixel ? x : z);
}

Var synthesize_latent(const CodecModel& m, const Var& y_hat) {
  if (m.distortion == DistortionSpace::kPixel) {
    return m.vae.encode(m.transforms.synthesis_pixel(y_hat));
  }
  return m.transforms.synthesis(y_hat);
}

EncodeResult encode_image(const CodecModel& m, const Tensor& x, const TagSet* tags) {
  if (x.rank() != 4 || x.dim(0) != 1 || x.dim(1) != 3) {
    throw ShapeError("encode expects one image (1, 3, H, W), got " + shape_string(x.shape()));
  }
  const int h = x.dim(2), w = x.dim(3), mult = m.size_multiple();
  if (h % mult || w % mult || h == 0 || w == 0) {
    throw ShapeError("image " + std::to_string(w) + "x" + std::to_string(h) +
                     " must have sides divisible by " + std::to_string(mult));
  }
  if (h > 65535 || w > 65535) throw ShapeError("image sides must fit in 16 bits");
  NoGradGuard guard;
  EncodeResult r;
  CodedLatents& L = r.latents;
  L.z = m.vae.encode(x);
  const Var y = m.transforms.analysis(coding_input(m, x, L.z));
  const Tensor zh = m.hyper.analysis(y).value();

  const std::vector<int> hyper_syms = to_symbols(quantize_round(zh), &L.clamped);
  const std::vector<int> main_syms = to_symbols(quantize_round(y.value()), &L.clamped);
  if (L.clamped) {
    std::cerr << "warning: " << L.clamped << " code symbols clamped to [" << kSymbolMin << ", "
              << kSymbolMax << "]\n";
  }
  L.zh_hat = from_symbols(hyper_syms, zh.shape());
  L.y_hat = from_symbols(main_syms, y.shape());

  const GaussianParams p = m.hyper.synthesis(Var(L.zh_hat));
  const std::vector<CdfTable> main_tables =
      build_gaussian_tables(p.mean.value().data(), p.scale.value().data());
  const std::vector<CdfTable> hyper_tables = m.prior.build_tables();
  const std::vector<int> hyper_idx = channel_indexes(L.zh_hat.shape());

  Container& c = r.container;
  c.quality = static_cast<uint8_t>(m.quality);
  c.width = static_cast<uint16_t>(w);
  c.height = static_cast<uint16_t>(h);
  c.tags = tags ? *tags : m.tagger.extract(x).at(0);
  c.hyper = range_encode(hyper_syms, hyper_tables, hyper_idx);
  c.main = range_encode(main_syms, main_tables);
  r.tags = c.tags;
  r.bytes = assemble(c);

  L.estimated_bits = gaussian_bits(Var(L.y_hat), p.mean, p.scale).value().item() +
                     m.prior.bits(Var(L.zh_hat)).value().item();
  L.z_hat = synthesize_latent(m, Var(L.y_hat)).value();
  return r;
}

DecodeResult decode_latents(const CodecModel& m, const std::vector<uint8_t>& bytes) {
  const Container c = parse(bytes);
  if (c.quality != m.quality) {
    throw CheckpointMismatch("stream has quality index " + std::to_string(c.quality) +
                             " but the checkpoint is for quality " + std::to_string(m.quality));
  }
  const int mult = m.size_multiple();
  if (c.height % mult || c.width % mult) {
    throw CheckpointMismatch("stream size " + std::to_string(c.width) + "x" +
                             std::to_string(c.height) + " is not a multiple of " +
                             std::to_string(mult) + " required by the checkpoint");
  }
  for (int id : c.tags.ids()) {
    if (id >= m.dictionary.size()) {
      throw CheckpointMismatch("tag id " + std::to_string(id) + " is outside the " +
                               std::to_string(m.dictionary.size()) + "-entry dictionary");
    }
  }
  NoGradGuard guard;
  const Shapes s = code_shapes(m, c.height, c.width);
  DecodeResult r;
  r.tags = c.tags;
  const std::vector<CdfTable> hyper_tables = m.prior.build_tables();
  const std::vector<int> hyper_idx = channel_indexes(s.zh);
  r.zh_hat = from_symbols(range_decode(c.hyper, shape_numel(s.zh), hyper_tables, hyper_idx), s.zh);
  const GaussianParams p = m.hyper.synthesis(Var(r.zh_hat));
  const std::vector<CdfTable> main_tables =
      build_gaussian_tables(p.mean.value().data(), p.scale.value().data());
  r.y_hat = from_symbols(range_decode(c.main, shape_numel(s.y), main_tables), s.y);
  r.z_hat = synthesize_latent(m, Var(r.y_hat)).value();
  return r;
}

Tensor reconstruct_latent(const CodecModel& m, const Tensor& z_hat, const TagSet& tags,
                          const SamplingOptions& opts, int* evaluations) {
  NoGradGuard guard;
  const Var cond(z_hat);
  const SamplePredictor pred = [&](const Tensor& z_t, int t, bool conditional) {
    const std::vector<TagSet> c = {conditional ? tags : TagSet()};
    return predict_eps(m.denoiser, m.control, Var(z_t), cond, {t}, c).value();
  };
  Rng rng(opts.seed);
  SampleStats stats;
  Tensor out = sample(pred, z_hat.shape(), m.schedule, opts.steps, opts.cfg_scale, rng, &stats);
  if (evaluations) *evaluations = stats.evaluations;
  return out;
}

DecodeResult decode_image(const CodecModel& m, const std::vector<uint8_t>& bytes,
                          const SamplingOptions& opts) {
  DecodeResult r = decode_latents(m, bytes);
  r.z_rec = reconstruct_latent(m, r.z_hat, r.tags, opts, &r.evaluations);
  r.image = m.vae.decode(r.z_rec);
  return r;
}

// ---------------------------------------------------------------------------
// Metrics

double psnr(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw ShapeError("PSNR needs equal shapes, got " + shape_string(x.shape()) + " and " +
                     shape_string(x_hat.shape()));
  }
  const double e = mse(x, x_hat);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

double bits_per_pixel_from_bits(double bits, int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("bpp needs positive dimensions");
  return bits / (static_cast<double>(height) * width);
}

double bits_per_pixel(size_t bytes, int height, int width) {
  return bits_per_pixel_from_bits(8.0 * static_cast<double>(bytes), height, width);
}

Metrics metrics(const Tensor& x, const Tensor& x_hat, const std::vector<uint8_t>& bytes) {
  Metrics out;
  out.psnr_db = psnr(x, x_hat);
  out.bpp = bits_per_pixel(bytes.size(), x.dim(2), x.dim(3));
  return out;
}

std::string format_psnr(double psnr_db) {
  if (std::isinf(psnr_db) && psnr_db > 0) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", psnr_db);
  return buf;
}

}  // namespace diffcodec
