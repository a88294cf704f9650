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


// Training harness. Stages, in order, each writing into the output
// directory:
//
//   vae       toy VAE on image patches, latent scale calibrated   vae.ckpt
//   tagger    multi-label tag classifier                          tagger.ckpt
//   denoiser  bare denoiser on VAE latents, tags dropped per image denoiser.ckpt
//   1         codec transforms, entropy model and control branch  stage1.ckpt
//             at the first rate weight, prerequisites frozen
//   2         one fine-tuned fork per rate weight                 q0.ckpt .. q4.ckpt
//
// "prereq" runs the first three, "all" runs everything.

#ifndef DIFFCODEC_TRAINING_H_
#define DIFFCODEC_TRAINING_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "diffcodec/config.h"
#include "diffcodec/dataset.h"
#include "diffcodec/pipeline.h"

namespace diffcodec {

struct PipelineConfig {
  uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::string dictionary_path = "data/tags.txt";

  std::string dataset = "synthetic";  // synthetic | folder
  std::string data_dir;
  uint64_t data_seed = 1234;
  int image_size = 32;
  int train_images = 1000;
  int test_images = 100;

  VaeConfig vae;
  int vae_iterations = 2000;
  double vae_lr = 1e-3;
  int vae_batch = 16;

  int tagger_width = 16;
  int tagger_iterations = 600;
  double tagger_lr = 2e-3;
  int tagger_batch = 16;

  UNetConfig unet;
  int denoiser_iterations = 4000;
  double denoiser_lr = 5e-4;
  int denoiser_batch = 16;
  double tag_dropout = 0.1;

  ScheduleKind schedule_kind = ScheduleKind::kScaledLinear;
  int schedule_T = 1000;
  double beta_start = 8.5e-4;
  double beta_end = 1.2e-2;

  TransformConfig codec;
  DistortionSpace distortion = DistortionSpace::kLatent;
  LossWeights weights;  // weights.rate is overridden per stage
  Site sc_site = Site::kMid;
  int sc_t_max = 0;  // 0 selects clean features
  std::vector<double> rate_ladder{kRateLadder.begin(), kRateLadder.end()};

  int stage1_iterations = 20000;
  double stage1_lr = 1e-4;
  int stage2_iterations = 20000;
  double stage2_lr = 5e-5;
  int codec_batch = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  SamplingOptions sampling;
  int log_every = 100;

  static PipelineConfig from(const Config& c);
};

using Logger = std::function<void(const std::string&)>;
void log_to_stderr(const std::string& line);

struct StageReport {
  std::string stage;
  std::vector<double> losses;  // one per iteration
  double initial_validation = 0.0;
  double final_validation = 0.0;
  double seconds = 0.0;
  std::map<std::string, double> extra;
};

struct DataSplit {
  Dataset train, test;
};
DataSplit load_data(const PipelineConfig& cfg, const TagDictionary& dict);

VaeModel train_vae(const PipelineConfig& cfg, const Dataset& train, Rng& rng,
                   StageReport* report = nullptr, const Logger& log = log_to_stderr);
TagClassifier train_tagger(const PipelineConfig& cfg, const Dataset& train, int num_tags, Rng& rng,
                           StageReport* report = nullptr, const Logger& log = log_to_stderr);
UNet train_denoiser(const PipelineConfig& cfg, const Tensor& latents,
                    const std::vector<TagSet>& tags, int dictionary_size, Rng& rng,
                    StageReport* report = nullptr, const Logger& log = log_to_stderr);

// Images with their frozen-model latents and extracted tags.
struct CodecData {
  Tensor images, latents;
  std::vector<TagSet> tags;
  int size() const { return images.dim(0); }
};
CodecData prepare_codec_data(const CodecModel& m, const Dataset& d, int batch = 32);

// Training-mode loss of the codec on one batch; fills `parts` when given.
Var codec_loss(const CodecModel& m, const PipelineConfig& cfg, const LossWeights& w,
               const Tensor& x, const Tensor& z, const std::vector<TagSet>& tags, Rng& rng,
               LossComponents* parts = nullptr);
// Loss on a fixed batch with fixed draws (seeded), no gradients.
double validation_loss(const CodecModel& m, const PipelineConfig& cfg, const LossWeights& w,
                       const CodecData& val, uint64_t seed);

// Trains codec transforms, entropy model and control branch of `m` at
// m.lambda_rate; the prerequisites stay frozen.
void train_codec(CodecModel& m, const PipelineConfig& cfg, const CodecData& train,
                 const CodecData& val, int iterations, double lr, Rng& rng,
                 StageReport* report = nullptr, const Logger& log = log_to_stderr);

// Assembles a codec bundle from prerequisite models with fresh codec parts.
std::unique_ptr<CodecModel> make_codec_model(const PipelineConfig& cfg, const TagDictionary& dict,
                                             VaeModel& vae, TagClassifier& tagger, UNet& denoiser,
                                             Rng& rng);

// Runs one named stage, reading and writing checkpoints in cfg.output_dir.
std::vector<StageReport> run_stage(const PipelineConfig& cfg, const std::string& stage,
                                   const Logger& log = log_to_stderr);

std::string checkpoint_path(const PipelineConfig& cfg, const std::string& name);
std::string quality_checkpoint_name(int quality);

}  // namespace diffcodec

#endif  // DIFFCODEC_TRAINING_H_
