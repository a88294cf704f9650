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


// The assembled codec: composite training loss, the model bundle stored in a
// checkpoint, the encode and decode paths, and image metrics.
//
// Encode: x -> E_VAE -> E_c -> round -> hyper analysis -> round -> range code
// (hyper section with the factorized prior, main section with per-element
// Gaussians from the hyper synthesis), tags from the bundled extractor.
// Decode: parse -> range decode -> D_c -> z_hat -> DDIM sampling from pure
// noise, guided by the control branch and the tags -> D_VAE.

#ifndef DIFFCODEC_PIPELINE_H_
#define DIFFCODEC_PIPELINE_H_

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffcodec/bitstream.h"
#include "diffcodec/control.h"
#include "diffcodec/diffusion.h"
#include "diffcodec/entropy_model.h"
#include "diffcodec/latent_transforms.h"
#include "diffcodec/semantics.h"
#include "diffcodec/tagging.h"
#include "diffcodec/vae.h"

namespace diffcodec {

class TensorArchive;

inline constexpr std::array<double, 5> kRateLadder = {2.0, 4.0, 8.0, 16.0, 32.0};
double lambda_for_quality(int quality);

struct LossWeights {
  double rate = kRateLadder[0];
  double dist = 1.0;
  double diff = 1.0;
  double sem = kDefaultSemanticWeight;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossComponents {
  Var rate, dist, diff, sem;
};

// rate*w.rate + dist*w.dist + diff*w.diff + sem*w.sem. A non-finite
// component raises TrainingError naming it.
Var composite_loss(const LossComponents& c, const LossWeights& w);

enum class DistortionSpace { kLatent, kPixel };
DistortionSpace parse_distortion_space(const std::string& name);
const char* distortion_space_name(DistortionSpace s);

// Everything needed to encode and decode at one quality index. Parameters
// live in shared autograd nodes, so bundles are cloned through a checkpoint
// rather than copied.
struct CodecModel {
  CodecModel() = default;
  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;

  TagDictionary dictionary;
  VaeModel vae;
  TagClassifier tagger;
  UNet denoiser;
  ControlBranch control;
  CodecTransforms transforms;
  Hyperprior hyper;
  FactorizedPrior prior;
  NoiseSchedule schedule;
  DistortionSpace distortion = DistortionSpace::kLatent;
  int quality = 0;
  double lambda_rate = kRateLadder[0];

  // Fresh codec parts (transforms, entropy model, control branch) around
  // already-trained prerequisites.
  void init_codec(const TransformConfig& config, Rng& rng);

  // Width/height multiple required of input images.
  int size_multiple() const;

  // Parameters trained by the codec stages.
  void collect_codec(NamedParams& out);
  // Frozen parameters (VAE, tagger, denoiser).
  void collect_frozen(NamedParams& out);

  TensorArchive to_archive();
  static std::unique_ptr<CodecModel> from_archive(const TensorArchive& archive);
  void save(const std::string& path);
  static std::unique_ptr<CodecModel> load(const std::string& path);
  std::unique_ptr<CodecModel> clone();
};

// Parts of the bundle also stored on their own by the prerequisite stages.
void save_schedule(const NoiseSchedule& s, TensorArchive& archive);
NoiseSchedule load_schedule(const TensorArchive& archive);
void save_unet(UNet& unet, TensorArchive& archive, const std::string& prefix);
UNet load_unet(const TensorArchive& archive, const std::string& prefix);
void save_tagger(TagClassifier& tagger, TensorArchive& archive, const std::string& prefix);
TagClassifier load_tagger(const TensorArchive& archive, const std::string& prefix);
void save_dictionary(const TagDictionary& d, TensorArchive& archive);
TagDictionary load_dictionary(const TensorArchive& archive);

class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CodedLatents {
  Tensor z;        // encoder-side latent E_VAE(x) (coding target)
  Tensor y_hat;    // (1, M, h, w) integer valued
  Tensor zh_hat;   // (1, N_h, h/2, w/2) integer valued
  Tensor z_hat;    // synthesis output, latent shaped
  double estimated_bits = 0.0;  // Gaussian + factorized rate of the coded symbols
  size_t clamped = 0;           // symbols clamped into [-255, 255]
};

struct EncodeResult {
  std::vector<uint8_t> bytes;
  Container container;
  CodedLatents latents;
  TagSet tags;
};

// x: (1, 3, H, W) in [0, 1]. `tags` overrides the bundled extractor.
EncodeResult encode_image(const CodecModel& m, const Tensor& x, const TagSet* tags = nullptr);

struct DecodeResult {
  Tensor image;
  Tensor y_hat, zh_hat, z_hat;
  Tensor z_rec;  // sampled latent handed to the VAE decoder
  TagSet tags;
  int evaluations = 0;
};

struct SamplingOptions {
  int steps = 50;
  double cfg_scale = 5.0;
  uint64_t seed = 0;
};

// Entropy decoding and synthesis only; no diffusion sampling.
DecodeResult decode_latents(const CodecModel& m, const std::vector<uint8_t>& bytes);
DecodeResult decode_image(const CodecModel& m, const std::vector<uint8_t>& bytes,
                          const SamplingOptions& opts = {});
// Conditional DDIM reconstruction of a latent from z_hat and tags.
Tensor reconstruct_latent(const CodecModel& m, const Tensor& z_hat, const TagSet& tags,
                          const SamplingOptions& opts, int* evaluations = nullptr);

// Decoded-latent estimate for a code tensor, following the distortion space.
Var synthesize_latent(const CodecModel& m, const Var& y_hat);
// What E_c consumes for an image batch: its latent, or the pixels.
Var coding_input(const CodecModel& m, const Tensor& x, const Tensor& z);

struct Metrics {
  double psnr_db = 0.0;  // +inf for identical images
  double bpp = 0.0;
  double latent_mse = 0.0;
  double encode_seconds = 0.0;
  double decode_seconds = 0.0;
};

double psnr(const Tensor& x, const Tensor& x_hat);
double bits_per_pixel(size_t bytes, int height, int width);
double bits_per_pixel_from_bits(double bits, int height, int width);
Metrics metrics(const Tensor& x, const Tensor& x_hat, const std::vector<uint8_t>& bytes);
// "inf" for infinite PSNR, otherwise fixed with 4 decimals.
std::string format_psnr(double psnr_db);

}  // namespace diffcodec

#endif  // DIFFCODEC_PIPELINE_H_
