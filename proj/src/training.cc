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


#include "diffcodec/training.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "diffcodec/archive.h"

namespace diffcodec {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Adam make_adam(const NamedParams& p, double lr, const PipelineConfig& cfg) {
  return Adam(param_handles(p), {.lr = lr, .beta1 = cfg.adam_beta1, .beta2 = cfg.adam_beta2});
}

std::vector<TagSet> drop_tags(const std::vector<TagSet>& tags, double p, Rng& rng) {
  std::vector<TagSet> out;
  out.reserve(tags.size());
  for (const TagSet& t : tags) out.push_back(dropout_tags(t, p, rng));
  return out;
}

bool should_log(const PipelineConfig& cfg, int it, int total) {
  return cfg.log_every > 0 && (it % cfg.log_every == 0 || it == total);
}

void write_losses(const PipelineConfig& cfg, const StageReport& r) {
  std::ofstream f(checkpoint_path(cfg, r.stage + "_losses.csv"));
  f << "iteration,loss\n";
  for (size_t i = 0; i < r.losses.size(); ++i) f << i + 1 << "," << format_exact(r.losses[i]) << "\n";
}

TensorArchive prerequisite_archive(const std::string& kind) {
  TensorArchive a;
  a.set_meta("format", "diffcodec-model");
  a.set_meta("kind", kind);
  return a;
}

TensorArchive load_prerequisite(const PipelineConfig& cfg, const std::string& kind) {
  const std::string path = checkpoint_path(cfg, kind + ".ckpt");
  if (!std::filesystem::exists(path)) {
    throw TrainingError("missing prerequisite checkpoint " + path + " (run --stage " + kind + ")");
  }
  TensorArchive a = TensorArchive::load(path);
  if (!a.has_meta("kind") || a.meta("kind") != kind) {
    throw TrainingError(path + " is not a " + kind + " checkpoint");
  }
  return a;
}

}  // namespace

void log_to_stderr(const std::string& line) { std::cerr << line << std::endl; }

std::string checkpoint_path(const PipelineConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

std::string quality_checkpoint_name(int quality) { return "q" + std::to_string(quality) + ".ckpt"; }

PipelineConfig PipelineConfig::from(const Config& c) {
  PipelineConfig p;
  p.seed = static_cast<uint64_t>(c.get_int("seed", static_cast<int>(p.seed)));
  p.output_dir = c.get_string("output_dir", p.output_dir);
  p.dictionary_path = c.get_string("dictionary", p.dictionary_path);
  p.dataset = c.get_string("dataset", p.dataset);
  if (p.dataset != "synthetic" && p.dataset != "folder") {
    throw ConfigError("dataset must be 'synthetic' or 'folder', got '" + p.dataset + "'");
  }
  p.data_dir = c.get_string("data_dir", p.data_dir);
  p.data_seed = static_cast<uint64_t>(c.get_int("data_seed", static_cast<int>(p.data_seed)));
  p.image_size = c.get_int("image_size", p.image_size);
  p.train_images = c.get_int("train_images", p.train_images);
  p.test_images = c.get_int("test_images", p.test_images);

  p.vae.latent_channels = c.get_int("vae.latent_channels", p.vae.latent_channels);
  p.vae.factor = c.get_int("vae.factor", p.vae.factor);
  p.vae.width = c.get_int("vae.width", p.vae.width);
  p.vae.kl_weight = c.get_double("vae.kl_weight", p.vae.kl_weight);
  p.vae_iterations = c.get_int("vae.iterations", p.vae_iterations);
  p.vae_lr = c.get_double("vae.lr", p.vae_lr);
  p.vae_batch = c.get_int("vae.batch", p.vae_batch);

  p.tagger_width = c.get_int("tagger.width", p.tagger_width);
  p.tagger_iterations = c.get_int("tagger.iterations", p.tagger_iterations);
  p.tagger_lr = c.get_double("tagger.lr", p.tagger_lr);
  p.tagger_batch = c.get_int("tagger.batch", p.tagger_batch);

  p.unet.latent_channels = p.vae.latent_channels;
  p.unet.width0 = c.get_int("unet.width0", p.unet.width0);
  p.unet.width1 = c.get_int("unet.width1", p.unet.width1);
  p.unet.time_dim = c.get_int("unet.time_dim", p.unet.time_dim);
  p.denoiser_iterations = c.get_int("denoiser.iterations", p.denoiser_iterations);
  p.denoiser_lr = c.get_double("denoiser.lr", p.denoiser_lr);
  p.denoiser_batch = c.get_int("denoiser.batch", p.denoiser_batch);
  p.tag_dropout = c.get_double("tag_dropout", p.tag_dropout);

  p.schedule_kind = parse_schedule_kind(c.get_string("schedule.kind", "scaled_linear"));
  p.schedule_T = c.get_int("schedule.T", p.schedule_T);
  p.beta_start = c.get_double("schedule.beta_start", p.beta_start);
  p.beta_end = c.get_double("schedule.beta_end", p.beta_end);

  p.codec.code_channels = c.get_int("codec.code_channels", p.codec.code_channels);
  p.codec.hyper_channels = c.get_int("codec.hyper_channels", p.codec.hyper_channels);
  p.codec.width = c.get_int("codec.width", p.codec.width);
  p.codec.input = parse_input_space(c.get_string("codec.input", "latent"));
  p.distortion = parse_distortion_space(c.get_string("codec.distortion", "latent"));

  p.weights.dist = c.get_double("loss.lambda_dist", p.weights.dist);
  p.weights.diff = c.get_double("loss.lambda_diff", p.weights.diff);
  p.weights.sem = c.get_double("loss.lambda_sem", p.weights.sem);
  p.sc_site = parse_site(c.get_string("loss.sc_site", site_name(p.sc_site)));
  p.sc_t_max = c.get_int("loss.sc_t_max", p.sc_t_max);
  p.rate_ladder = c.get_doubles("rate_ladder", p.rate_ladder);
  if (p.rate_ladder.size() != kRateLadder.size()) {
    throw ConfigError("rate_ladder needs exactly " + std::to_string(kRateLadder.size()) + " values");
  }

  p.stage1_iterations = c.get_int("stage1.iterations", p.stage1_iterations);
  p.stage1_lr = c.get_double("stage1.lr", p.stage1_lr);
  p.stage2_iterations = c.get_int("stage2.iterations", p.stage2_iterations);
  p.stage2_lr = c.get_double("stage2.lr", p.stage2_lr);
  p.codec_batch = c.get_int("codec.batch", p.codec_batch);
  p.adam_beta1 = c.get_double("adam.beta1", p.adam_beta1);
  p.adam_beta2 = c.get_double("adam.beta2", p.adam_beta2);

  p.sampling.steps = c.get_int("sample.steps", p.sampling.steps);
  p.sampling.cfg_scale = c.get_double("sample.cfg_scale", p.sampling.cfg_scale);
  p.sampling.seed = static_cast<uint64_t>(c.get_int("sample.seed", static_cast<int>(p.sampling.seed)));
  p.log_every = c.get_int("log_every", p.log_every);

  for (int v : {p.vae_iterations, p.tagger_iterations, p.denoiser_iterations, p.stage1_iterations,
                p.stage2_iterations}) {
    if (v < 1) throw ConfigError("iteration counts must be positive");
  }
  for (double v : {p.vae_lr, p.tagger_lr, p.denoiser_lr, p.stage1_lr, p.stage2_lr}) {
    if (!(v > 0)) throw ConfigError("learning rates must be positive");
  }
  if (p.sc_t_max < 0 || p.sc_t_max > p.schedule_T) {
    throw ConfigError("loss.sc_t_max must be in [0, schedule.T]");
  }
  const int mult = p.vae.factor * CodecTransforms::kStride * 2;
  if (p.image_size % mult) {
    throw ConfigError("image_size must be a multiple of " + std::to_string(mult));
  }
  for (const std::string& k : c.unused_keys()) {
    std::cerr << "warning: unknown config key '" << k << "'\n";
  }
  return p;
}

DataSplit load_data(const PipelineConfig& cfg, const TagDictionary& dict) {
  DataSplit s;
  if (cfg.dataset == "synthetic") {
    s.train = make_synthetic_shapes(cfg.train_images, cfg.image_size, cfg.data_seed, dict);
    s.test = make_synthetic_shapes(cfg.test_images, cfg.image_size, cfg.data_seed + 1, dict);
  } else {
    if (cfg.data_dir.empty()) throw ConfigError("dataset = folder needs data_dir");
    s.train = load_image_folder(cfg.data_dir, cfg.image_size, cfg.train_images, cfg.data_seed);
    s.test = load_image_folder(cfg.data_dir, cfg.image_size, cfg.test_images, cfg.data_seed + 1);
  }
  return s;
}

VaeModel train_vae(const PipelineConfig& cfg, const Dataset& train, Rng& rng, StageReport* report,
                   const Logger& log) {
  const auto t0 = Clock::now();
  VaeModel vae(cfg.vae, rng);
  NamedParams p;
  vae.collect(p, "vae");
  Adam opt = make_adam(p, cfg.vae_lr, cfg);
  BatchSampler sampler(train.size(), cfg.vae_batch, rng.next());
  StageReport r;
  r.stage = "vae";
  for (int it = 1; it <= cfg.vae_iterations; ++it) {
    // Cosine decay keeps the late iterations from bouncing.
    opt.set_lr(cfg.vae_lr * 0.5 * (1 + std::cos(M_PI * (it - 1) / cfg.vae_iterations)));
    r.losses.push_back(vae_train_step(vae, opt, train.batch(sampler.next()), rng));
    if (should_log(cfg, it, cfg.vae_iterations)) {
      log("[vae] iter " + std::to_string(it) + "/" + std::to_string(cfg.vae_iterations) + " loss " +
          fmt("%.6f", r.losses.back()) + fmt(" (%.1fs)", seconds_since(t0)));
    }
  }
  vae.calibrate_latent_scale(train.images);
  log("[vae] latent scale " + fmt("%.6f", vae.latent_scale()));
  r.seconds = seconds_since(t0);
  if (report) *report = r;
  return vae;
}

TagClassifier train_tagger(const PipelineConfig& cfg, const Dataset& train, int num_tags, Rng& rng,
                           StageReport* report, const Logger& log) {
  const auto t0 = Clock::now();
  TagClassifier tagger(num_tags, cfg.tagger_width, rng);
  NamedParams p;
  tagger.collect(p, "tagger");
  Adam opt = make_adam(p, cfg.tagger_lr, cfg);
  BatchSampler sampler(train.size(), cfg.tagger_batch, rng.next());
  StageReport r;
  r.stage = "tagger";
  for (int it = 1; it <= cfg.tagger_iterations; ++it) {
    const std::vector<int> idx = sampler.next();
    opt.zero_grad();
    const Var loss = tagger.loss(Var(train.batch(idx)), train.batch_tags(idx));
    backward(loss);
    opt.step();
    r.losses.push_back(loss.value().item());
    if (should_log(cfg, it, cfg.tagger_iterations)) {
      log("[tagger] iter " + std::to_string(it) + "/" + std::to_string(cfg.tagger_iterations) +
          " loss " + fmt("%.6f", r.losses.back()) + fmt(" (%.1fs)", seconds_since(t0)));
    }
  }
  r.seconds = seconds_since(t0);
  if (report) *report = r;
  return tagger;
}

UNet train_denoiser(const PipelineConfig& cfg, const Tensor& latents,
                    const std::vector<TagSet>& tags, int dictionary_size, Rng& rng,
                    StageReport* report, const Logger& log) {
  const auto t0 = Clock::now();
  UNetConfig uc = cfg.unet;
  uc.latent_channels = latents.dim(1);
  uc.dictionary_size = dictionary_size;
  UNet unet(uc, rng);
  const NoiseSchedule sched =
      NoiseSchedule::make(cfg.schedule_T, cfg.schedule_kind, cfg.beta_start, cfg.beta_end);
  NamedParams p;
  unet.collect(p, "unet");
  Adam opt = make_adam(p, cfg.denoiser_lr, cfg);
  BatchSampler sampler(latents.dim(0), cfg.denoiser_batch, rng.next());
  StageReport r;
  r.stage = "denoiser";
  for (int it = 1; it <= cfg.denoiser_iterations; ++it) {
    const std::vector<int> idx = sampler.next();
    std::vector<Tensor> parts;
    std::vector<TagSet> batch_tags;
    for (int i : idx) {
      parts.push_back(batch_slice(latents, i, 1));
      batch_tags.push_back(tags[i]);
    }
    batch_tags = drop_tags(batch_tags, cfg.tag_dropout, rng);
    const TrainPredictor pred = [&](const Var& zt, const std::vector<int>& t) {
      return unet.forward(zt, t, batch_tags);
    };
    opt.set_lr(cfg.denoiser_lr * 0.5 * (1 + std::cos(M_PI * (it - 1) / cfg.denoiser_iterations)));
    opt.zero_grad();
    const Var loss = diffusion_loss(pred, batch_concat(parts), sched, rng);
    backward(loss);
    opt.step();
    r.losses.push_back(loss.value().item());
    if (should_log(cfg, it, cfg.denoiser_iterations)) {
      log("[denoiser] iter " + std::to_string(it) + "/" + std::to_string(cfg.denoiser_iterations) +
          " loss " + fmt("%.6f", r.losses.back()) + fmt(" (%.1fs)", seconds_since(t0)));
    }
  }
  r.seconds = seconds_since(t0);
  if (report) *report = r;
  return unet;
}

CodecData prepare_codec_data(const CodecModel& m, const Dataset& d, int batch) {
  CodecData out;
  out.images = d.images;
  std::vector<Tensor> lat;
  for (int s = 0; s < d.size(); s += batch) {
    const Tensor x = batch_slice(d.images, s, std::min(batch, d.size() - s));
    lat.push_back(m.vae.encode(x));
    const std::vector<TagSet> t = m.tagger.extract(x);
    out.tags.insert(out.tags.end(), t.begin(), t.end());
  }
  out.latents = batch_concat(lat);
  return out;
}

Var codec_loss(const CodecModel& m, const PipelineConfig& cfg, const LossWeights& w,
               const Tensor& x, const Tensor& z, const std::vector<TagSet>& tags, Rng& rng,
               LossComponents* parts) {
  TrainingScope scope;
  const int n = x.dim(0);
  const Var y = m.transforms.analysis(coding_input(m, x, z));
  const Var y_noisy = quantize(y, QuantizerMode::kNoise, &rng);
  const Var y_ste = quantize(y, QuantizerMode::kSte);
  const Var zh_noisy = quantize(m.hyper.analysis(y), QuantizerMode::kNoise, &rng);
  const GaussianParams g = m.hyper.synthesis(zh_noisy);
  const double pixels = static_cast<double>(n) * x.dim(2) * x.dim(3);

  LossComponents c;
  c.rate = (gaussian_bits(y_noisy, g.mean, g.scale) + m.prior.bits(zh_noisy)) * (1.0 / pixels);
  Var z_hat;
  if (m.distortion == DistortionSpace::kPixel) {
    const Var x_hat = m.transforms.synthesis_pixel(y_ste);
    c.dist = ops::mse(x_hat, Var(x));
    z_hat = m.vae.encode(x_hat);
  } else {
    z_hat = m.transforms.synthesis(y_ste);
    c.dist = ops::mse(z_hat, Var(z));
  }
  const std::vector<TagSet> cond = drop_tags(tags, cfg.tag_dropout, rng);
  const TrainPredictor pred = [&](const Var& zt, const std::vector<int>& t) {
    return predict_eps(m.denoiser, m.control, zt, z_hat, t, cond);
  };
  c.diff = diffusion_loss(pred, z, m.schedule, rng);
  if (w.sem != 0.0) {
    c.sem = cfg.sc_t_max > 0
                ? sc_loss_noisy(m.denoiser, Var(z), z_hat, cfg.sc_t_max, m.schedule, rng, cfg.sc_site)
                : sc_loss(extract_semantic_features(m.denoiser, Var(z), cfg.sc_site),
                          extract_semantic_features(m.denoiser, z_hat, cfg.sc_site));
  } else {
    c.sem = Var(Tensor::scalar(0.0));
  }
  Var total = composite_loss(c, w);
  if (parts) *parts = c;
  return total;
}

double validation_loss(const CodecModel& m, const PipelineConfig& cfg, const LossWeights& w,
                       const CodecData& val, uint64_t seed) {
  NoGradGuard guard;
  Rng rng(seed);
  return codec_loss(m, cfg, w, val.images, val.latents, val.tags, rng).value().item();
}

void train_codec(CodecModel& m, const PipelineConfig& cfg, const CodecData& train,
                 const CodecData& val, int iterations, double lr, Rng& rng, StageReport* report,
                 const Logger& log) {
  const auto t0 = Clock::now();
  NamedParams frozen, trainable;
  m.collect_frozen(frozen);
  set_requires_grad(frozen, false);
  m.collect_codec(trainable);
  set_requires_grad(trainable, true);
  Adam opt = make_adam(trainable, lr, cfg);
  LossWeights w = cfg.weights;
  w.rate = m.lambda_rate;
  const uint64_t val_seed = cfg.seed + 7919;
  StageReport r;
  r.stage = report && !report->stage.empty() ? report->stage : "codec";
  r.initial_validation = validation_loss(m, cfg, w, val, val_seed);
  BatchSampler sampler(train.size(), cfg.codec_batch, rng.next());
  for (int it = 1; it <= iterations; ++it) {
    const std::vector<int> idx = sampler.next();
    std::vector<Tensor> xs, zs;
    std::vector<TagSet> tags;
    for (int i : idx) {
      xs.push_back(batch_slice(train.images, i, 1));
      zs.push_back(batch_slice(train.latents, i, 1));
      tags.push_back(train.tags[i]);
    }
    opt.zero_grad();
    LossComponents parts;
    const Var loss = codec_loss(m, cfg, w, batch_concat(xs), batch_concat(zs), tags, rng, &parts);
    backward(loss);
    opt.step();
    r.losses.push_back(loss.value().item());
    if (should_log(cfg, it, iterations)) {
      log("[" + r.stage + "] iter " + std::to_string(it) + "/" + std::to_string(iterations) +
          " loss " + fmt("%.5f", r.losses.back()) + " rate " + fmt("%.4f", parts.rate.value().item()) +
          " dist " + fmt("%.4f", parts.dist.value().item()) + " diff " +
          fmt("%.4f", parts.diff.value().item()) + " sem " + fmt("%.4f", parts.sem.value().item()) +
          fmt(" (%.1fs)", seconds_since(t0)));
    }
  }
  r.final_validation = validation_loss(m, cfg, w, val, val_seed);
  log("[" + r.stage + "] validation loss " + fmt("%.5f", r.initial_validation) + " -> " +
      fmt("%.5f", r.final_validation));
  r.seconds = seconds_since(t0);
  if (report) *report = r;
}

std::unique_ptr<CodecModel> make_codec_model(const PipelineConfig& cfg, const TagDictionary& dict,
                                             VaeModel& vae, TagClassifier& tagger, UNet& denoiser,
                                             Rng& rng) {
  auto m = std::make_unique<CodecModel>();
  m->dictionary = dict;
  m->vae = vae;
  m->tagger = tagger;
  m->denoiser = denoiser;
  m->schedule = NoiseSchedule::make(cfg.schedule_T, cfg.schedule_kind, cfg.beta_start, cfg.beta_end);
  m->distortion = cfg.distortion;
  m->quality = 0;
  m->lambda_rate = cfg.rate_ladder[0];
  m->init_codec(cfg.codec, rng);
  return m;
}

std::vector<StageReport> run_stage(const PipelineConfig& cfg, const std::string& stage,
                                   const Logger& log) {
  if (stage == "prereq") {
    std::vector<StageReport> out;
    for (const char* s : {"vae", "tagger", "denoiser"}) {
      auto r = run_stage(cfg, s, log);
      out.insert(out.end(), r.begin(), r.end());
    }
    return out;
  }
  if (stage == "all") {
    std::vector<StageReport> out;
    for (const char* s : {"vae", "tagger", "denoiser", "1", "2"}) {
      auto r = run_stage(cfg, s, log);
      out.insert(out.end(), r.begin(), r.end());
    }
    return out;
  }
  std::filesystem::create_directories(cfg.output_dir);
  const TagDictionary dict = TagDictionary::load(cfg.dictionary_path);
  // Every stage gets its own stream derived from the run seed.
  uint64_t stage_salt = 0xcbf29ce484222325ull;  // FNV-1a, stable across platforms
  for (unsigned char ch : stage) stage_salt = (stage_salt ^ ch) * 0x100000001b3ull;
  stage_salt &= 0xFFFFFFFFu;
  Rng rng(cfg.seed * 1000003u + stage_salt);
  const DataSplit data = load_data(cfg, dict);
  std::vector<StageReport> reports(1);
  StageReport& r = reports[0];

  if (stage == "vae") {
    VaeModel vae = train_vae(cfg, data.train, rng, &r, log);
    double total = 0.0;
    for (int i = 0; i < data.test.size(); ++i) {
      const Tensor x = data.test.image(i);
      total += psnr(x, vae.decode(vae.encode(x)));
    }
    r.extra["test_psnr_db"] = total / data.test.size();
    log("[vae] held-out PSNR " + fmt("%.2f dB", r.extra["test_psnr_db"]));
    TensorArchive a = prerequisite_archive("vae");
    vae.save(a, "vae");
    a.save(checkpoint_path(cfg, "vae.ckpt"));
  } else if (stage == "tagger") {
    TagClassifier tagger = train_tagger(cfg, data.train, dict.size(), rng, &r, log);
    const std::vector<TagSet> pred = tagger.extract(data.test.images);
    int exact = 0;
    for (size_t i = 0; i < pred.size(); ++i) exact += pred[i] == data.test.tags[i];
    r.extra["test_exact_match"] = static_cast<double>(exact) / pred.size();
    log("[tagger] held-out exact tag-set match " + fmt("%.3f", r.extra["test_exact_match"]));
    TensorArchive a = prerequisite_archive("tagger");
    save_dictionary(dict, a);
    save_tagger(tagger, a, "tagger");
    a.save(checkpoint_path(cfg, "tagger.ckpt"));
  } else if (stage == "denoiser") {
    const TensorArchive va = load_prerequisite(cfg, "vae");
    const TensorArchive ta = load_prerequisite(cfg, "tagger");
    Rng init(0);
    VaeModel vae(read_vae_config(va, "vae"), init);
    vae.load(va, "vae");
    const TagClassifier tagger = load_tagger(ta, "tagger");
    std::vector<Tensor> lat;
    std::vector<TagSet> tags;
    for (int s = 0; s < data.train.size(); s += 32) {
      const Tensor x = batch_slice(data.train.images, s, std::min(32, data.train.size() - s));
      lat.push_back(vae.encode(x));
      const auto t = tagger.extract(x);
      tags.insert(tags.end(), t.begin(), t.end());
    }
    UNet unet = train_denoiser(cfg, batch_concat(lat), tags, dict.size(), rng, &r, log);
    TensorArchive a = prerequisite_archive("denoiser");
    save_dictionary(dict, a);
    save_unet(unet, a, "unet");
    save_schedule(NoiseSchedule::make(cfg.schedule_T, cfg.schedule_kind, cfg.beta_start, cfg.beta_end),
                  a);
    a.save(checkpoint_path(cfg, "denoiser.ckpt"));
  } else if (stage == "1") {
    const TensorArchive va = load_prerequisite(cfg, "vae");
    const TensorArchive ta = load_prerequisite(cfg, "tagger");
    const TensorArchive da = load_prerequisite(cfg, "denoiser");
    Rng init(0);
    VaeModel vae(read_vae_config(va, "vae"), init);
    vae.load(va, "vae");
    TagClassifier tagger = load_tagger(ta, "tagger");
    UNet unet = load_unet(da, "unet");
    auto m = make_codec_model(cfg, dict, vae, tagger, unet, rng);
    m->schedule = load_schedule(da);
    const CodecData train = prepare_codec_data(*m, data.train);
    const CodecData val = prepare_codec_data(*m, data.test);
    r.stage = "stage1";
    train_codec(*m, cfg, train, val, cfg.stage1_iterations, cfg.stage1_lr, rng, &r, log);
    m->save(checkpoint_path(cfg, "stage1.ckpt"));
  } else if (stage == "2") {
    const std::string base = checkpoint_path(cfg, "stage1.ckpt");
    if (!std::filesystem::exists(base)) {
      throw TrainingError("missing prerequisite checkpoint " + base + " (run --stage 1)");
    }
    auto stage1 = CodecModel::load(base);
    const CodecData train = prepare_codec_data(*stage1, data.train);
    const CodecData val = prepare_codec_data(*stage1, data.test);
    reports.assign(cfg.rate_ladder.size(), StageReport{});
    for (size_t q = 0; q < cfg.rate_ladder.size(); ++q) {
      auto m = stage1->clone();
      m->quality = static_cast<int>(q);
      m->lambda_rate = cfg.rate_ladder[q];
      Rng fork(cfg.seed * 1000003u + stage_salt + 17 * (q + 1));
      reports[q].stage = "stage2_q" + std::to_string(q);
      train_codec(*m, cfg, train, val, cfg.stage2_iterations, cfg.stage2_lr, fork, &reports[q], log);
      m->save(checkpoint_path(cfg, quality_checkpoint_name(static_cast<int>(q))));
    }
    for (const StageReport& rep : reports) write_losses(cfg, rep);
    return reports;
  } else {
    throw std::invalid_argument("unknown stage '" + stage +
                                "' (expected vae, tagger, denoiser, prereq, 1, 2 or all)");
  }
  write_losses(cfg, r);
  return reports;
}

}  // namespace diffcodec
