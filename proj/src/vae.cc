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


#include "diffcodec/vae.h"

#include <cmath>
#include <stdexcept>

#include "diffcodec/archive.h"

namespace diffcodec {

namespace {

int levels_of(int factor) {
  if (factor < 1 || (factor & (factor - 1)) != 0) {
    throw std::invalid_argument("VAE factor must be a power of two, got " + std::to_string(factor));
  }
  int n = 0;
  while ((1 << n) < factor) ++n;
  return n;
}

}  // namespace

VaeModel::VaeModel(const VaeConfig& config, Rng& rng) : config_(config) {
  const int levels = levels_of(config.factor);
  const int w = config.width;
  if (config.latent_channels < 1 || w < 1) throw std::invalid_argument("VAE sizes must be positive");
  enc_in_ = Conv2d(3, w, 3, 1, rng);
  for (int i = 0; i < levels; ++i) {
    enc_blocks_.emplace_back(w, w, 0, rng);
    downs_.emplace_back(w, w, 3, 2, rng);
  }
  enc_mid_ = ResBlock(w, w, 0, rng);
  enc_out_ = Conv2d(w, 2 * config.latent_channels, 3, 1, rng, 0.5);
  dec_in_ = Conv2d(config.latent_channels, w, 3, 1, rng);
  dec_mid_ = ResBlock(w, w, 0, rng);
  for (int i = 0; i < levels; ++i) {
    ups_.emplace_back(w, w, 3, 1, rng);
    dec_blocks_.emplace_back(w, w, 0, rng);
  }
  dec_out_ = Conv2d(w, 3, 3, 1, rng, 0.5);
}

void VaeModel::set_latent_scale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("latent scale must be positive");
  latent_scale_ = s;
}

void VaeModel::check_image(const Shape& s) const {
  if (s.size() != 4 || s[1] != 3) {
    throw ShapeError("VAE expects images (N, 3, H, W), got " + shape_string(s));
  }
  if (s[2] % config_.factor || s[3] % config_.factor || s[2] == 0 || s[3] == 0) {
    throw ShapeError("image size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " is not divisible by the VAE factor " + std::to_string(config_.factor));
  }
}

VaeModel::Posterior VaeModel::posterior(const Var& x) const {
  check_image(x.shape());
  Var h = enc_in_.forward(x);
  for (size_t i = 0; i < downs_.size(); ++i) h = downs_[i].forward(enc_blocks_[i].forward(h));
  h = enc_out_.forward(ops::silu(enc_mid_.forward(h)));
  const int c = config_.latent_channels;
  return {ops::slice_channels(h, 0, c), ops::slice_channels(h, c, c)};
}

Var VaeModel::encode(const Var& x) const { return posterior(x).mean * latent_scale_; }

Tensor VaeModel::encode(const Tensor& x) const {
  NoGradGuard guard;
  return encode(Var(x)).value();
}

Var VaeModel::decode_raw(const Var& z) const {
  const Shape& s = z.shape();
  if (s.size() != 4 || s[1] != config_.latent_channels) {
    throw ShapeError("VAE decoder expects latents (N, " + std::to_string(config_.latent_channels) +
                     ", h, w), got " + shape_string(s));
  }
  Var h = dec_mid_.forward(dec_in_.forward(z * (1.0 / latent_scale_)));
  for (size_t i = 0; i < ups_.size(); ++i) {
    h = dec_blocks_[i].forward(ups_[i].forward(ops::upsample_nearest2x(h)));
  }
  return dec_out_.forward(ops::silu(h)) + 0.5;
}

Tensor VaeModel::decode(const Tensor& z) const {
  NoGradGuard guard;
  Tensor out = decode_raw(Var(z)).value();
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

double VaeModel::calibrate_latent_scale(const Tensor& images, int batch) {
  NoGradGuard guard;
  double sum = 0.0, sq = 0.0;
  size_t count = 0;
  const int n = images.dim(0);
  for (int start = 0; start < n; start += batch) {
    const Tensor m = posterior(Var(batch_slice(images, start, std::min(batch, n - start))))
                         .mean.value();
    for (double v : m.vec()) {
      sum += v;
      sq += v * v;
    }
    count += m.size();
  }
  const double mean = sum / count;
  const double stddev = std::sqrt(std::max(sq / count - mean * mean, 1e-12));
  set_latent_scale(1.0 / stddev);
  return latent_scale_;
}

void VaeModel::collect(NamedParams& out, const std::string& prefix) {
  enc_in_.collect(out, prefix + ".enc_in");
  for (size_t i = 0; i < downs_.size(); ++i) {
    enc_blocks_[i].collect(out, prefix + ".enc" + std::to_string(i));
    downs_[i].collect(out, prefix + ".down" + std::to_string(i));
  }
  enc_mid_.collect(out, prefix + ".enc_mid");
  enc_out_.collect(out, prefix + ".enc_out");
  dec_in_.collect(out, prefix + ".dec_in");
  dec_mid_.collect(out, prefix + ".dec_mid");
  for (size_t i = 0; i < ups_.size(); ++i) {
    ups_[i].collect(out, prefix + ".up" + std::to_string(i));
    dec_blocks_[i].collect(out, prefix + ".dec" + std::to_string(i));
  }
  dec_out_.collect(out, prefix + ".dec_out");
}

void VaeModel::save(TensorArchive& archive, const std::string& prefix) {
  write_vae_config(config_, archive, prefix);
  archive.set_meta(prefix + ".latent_scale", format_exact(latent_scale_));
  archive.put(prefix + ".latent_scale", Tensor::scalar(latent_scale_));
  NamedParams p;
  collect(p, prefix);
  save_params(p, archive);
}

void VaeModel::load(const TensorArchive& archive, const std::string& prefix) {
  NamedParams p;
  collect(p, prefix);
  load_params(p, archive);
  // The tensor copy is exact; the metadata string is for humans.
  set_latent_scale(archive.get(prefix + ".latent_scale").item());
}

VaeLoss vae_loss(const VaeModel& model, const Tensor& batch, Rng& rng) {
  const VaeModel::Posterior post = model.posterior(Var(batch));
  const Tensor noise = Tensor::randn(post.mean.shape(), rng);
  const Var sample = post.mean + ops::exp(post.logvar * 0.5) * Var(noise);
  const Var recon = model.decode_raw(sample * model.latent_scale());
  VaeLoss out;
  out.total = ops::mse(recon, Var(batch));
  out.reconstruction = out.total.value().item();
  if (model.config().kl_weight != 0.0) {
    const Var kl = ops::mean(ops::square(post.mean) + ops::exp(post.logvar) - post.logvar + -1.0) *
                   0.5;
    out.kl = kl.value().item();
    out.total = out.total + kl * model.config().kl_weight;
  }
  return out;
}

double vae_train_step(VaeModel& model, Adam& opt, const Tensor& batch, Rng& rng) {
  if (batch.rank() != 4 || batch.dim(0) == 0) throw ShapeError("empty VAE training batch");
  opt.zero_grad();
  const VaeLoss loss = vae_loss(model, batch, rng);
  backward(loss.total);
  opt.step();
  return loss.total.value().item();
}

VaeConfig read_vae_config(const TensorArchive& archive, const std::string& prefix) {
  VaeConfig c;
  c.latent_channels = std::stoi(archive.meta(prefix + ".latent_channels"));
  c.factor = std::stoi(archive.meta(prefix + ".factor"));
  c.width = std::stoi(archive.meta(prefix + ".width"));
  c.kl_weight = std::stod(archive.meta(prefix + ".kl_weight"));
  return c;
}

void write_vae_config(const VaeConfig& c, TensorArchive& archive, const std::string& prefix) {
  archive.set_meta(prefix + ".latent_channels", std::to_string(c.latent_channels));
  archive.set_meta(prefix + ".factor", std::to_string(c.factor));
  archive.set_meta(prefix + ".width", std::to_string(c.width));
  archive.set_meta(prefix + ".kl_weight", format_exact(c.kl_weight));
}

}  // namespace diffcodec
