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


// End-to-end acceptance run. Each criterion prints one PASS/FAIL line; the
// exit status is nonzero if any fails. The trained-model criteria train the
// desk-scale pipeline first (or reuse checkpoints with --reuse).

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "diffcodec/archive.h"
#include "diffcodec/bitstream.h"
#include "diffcodec/control.h"
#include "diffcodec/diffusion.h"
#include "diffcodec/entropy_model.h"
#include "diffcodec/range_coder.h"
#include "diffcodec/semantics.h"
#include "diffcodec/tagging.h"
#include "diffcodec/training.h"
#include "test_util.h"

namespace diffcodec {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    ok_ = ok_ && ok;
  }
  bool ok() const { return ok_; }
  std::string failures() const {
    std::string s;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
    return s;
  }

 private:
  bool ok_ = true;
  std::vector<std::string> failures_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Property criteria.

Outcome coding_losslessness() {
  Rng rng(1001);
  Check c;
  size_t symbols_total = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const bool escape = rng.bernoulli(0.5);
    std::vector<CdfTable> tables;
    for (int i = 0, n = rng.uniform_int(1, 6); i < n; ++i) {
      if (rng.bernoulli(0.3)) {
        tables.push_back(build_gaussian_table(rng.uniform(-10, 10), rng.uniform(0.11, 30.0)));
      } else {
        const int bins = rng.uniform_int(1, 60);
        std::vector<double> pmf(bins + (escape ? 1 : 0));
        for (double& p : pmf) p = std::pow(rng.uniform(), 4.0);
        tables.push_back(quantize_pmf(rng.uniform_int(-40, 20), pmf, escape));
      }
    }
    const int count = rng.uniform_int(0, 400);
    std::vector<int> symbols(count), indexes(count);
    for (int i = 0; i < count; ++i) {
      indexes[i] = rng.uniform_int(0, static_cast<int>(tables.size()) - 1);
      const CdfTable& t = tables[indexes[i]];
      symbols[i] = (t.has_escape && rng.bernoulli(0.05))
                       ? rng.uniform_int(kSymbolMin, kSymbolMax)
                       : t.lo + rng.uniform_int(0, t.direct_count() - 1);
    }
    symbols_total += count;
    const auto bytes = range_encode(symbols, tables, indexes);
    c.expect(range_decode(bytes, count, tables, indexes) == symbols,
             "mismatch in trial " + std::to_string(trial));
  }
  return {c.ok(), c.ok() ? "10000 pairs, " + std::to_string(symbols_total) + " symbols"
                         : c.failures()};
}

Outcome gaussian_unit_value() {
  // Independent oracle: -log2(erf(0.5 / sqrt 2)), i.e. -log2(2 Phi(0.5) - 1).
  const double oracle = -std::log2(std::erf(0.5 / std::sqrt(2.0)));
  const double bits =
      rate_gaussian(Tensor({1}, 0.0), Tensor({1}, 0.0), Tensor({1}, 1.0)).total_bits;
  const bool ok = std::abs(bits - 1.3851) <= 1e-3 && std::abs(bits - oracle) <= 1e-9;
  return {ok, "rate " + fmt("%.6f", bits) + " bits, oracle " + fmt("%.6f", oracle)};
}

Outcome zero_init_control() {
  Rng rng(1003);
  UNetConfig cfg;
  cfg.width0 = 16;
  cfg.width1 = 32;
  cfg.time_dim = 32;
  cfg.dictionary_size = 13;
  UNet unet(cfg, rng);
  ControlBranch branch(unet, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Var z_t(Tensor::randn({2, 4, 8, 8}, rng));
    const Var z_hat(Tensor::randn({2, 4, 8, 8}, rng, 3.0));
    const std::vector<int> t = {rng.uniform_int(0, 1000), rng.uniform_int(0, 1000)};
    const std::vector<TagSet> tags = {TagSet({rng.uniform_int(0, 12)}), TagSet()};
    const Tensor bare = unet.forward(z_t, t, tags).value();
    const Tensor ctrl = predict_eps(unet, branch, z_t, z_hat, t, tags).value();
    worst = std::max(worst, (bare - ctrl).max_abs());
  }
  return {worst == 0.0, "max |difference| " + fmt("%.3g", worst) + " over 10 draws"};
}

Outcome sc_loss_algebra() {
  Rng rng(1004);
  Check c;
  double worst_fd = 0.0;
  auto val = [](const Tensor& a, const Tensor& b) {
    return sc_loss({Var(a), Site::kMid}, {Var(b), Site::kMid}).value().item();
  };
  for (int trial = 0; trial < 100; ++trial) {
    const Shape shape = {rng.uniform_int(1, 2), rng.uniform_int(2, 6), rng.uniform_int(1, 5)};
    const Tensor f = Tensor::randn(shape, rng);
    const Tensor g = Tensor::randn(shape, rng);
    c.expect(std::abs(val(f, f) + 1.0) <= 1e-12, "sc(F,F) != -1");
    c.expect(std::abs(val(f, f * -1.0) - 1.0) <= 1e-12, "sc(F,-F) != 1");
    const double scale = std::ldexp(1.0, rng.uniform_int(-6, 6));
    c.expect(val(f, g * scale) == val(f, g), "scale invariance not exact");
    const double err = testing::gradient_relative_error(
        [](const std::vector<Var>& v) { return sc_loss({v[0], Site::kMid}, {v[1], Site::kMid}); },
        {f, g});
    worst_fd = std::max(worst_fd, err);
  }
  c.expect(worst_fd <= 1e-4, "finite-difference error " + fmt("%.3g", worst_fd));
  return {c.ok(), c.ok() ? "100 features, worst FD rel. err " + fmt("%.2g", worst_fd)
                         : c.failures()};
}

Outcome diffusion_algebra() {
  Rng rng(1005);
  Check c;
  const NoiseSchedule s = NoiseSchedule::make(1000);
  const Tensor z0 = Tensor::randn({2, 4, 4, 4}, rng);
  const Tensor eps = Tensor::randn(z0.shape(), rng);
  c.expect(add_noise(z0, {0, 0}, eps, s) == z0, "add_noise at t=0 not identity");
  double inv = 0.0;
  for (int t = 1; t <= 1000; ++t) {
    const Tensor zt = add_noise(z0, {t, t}, eps, s);
    inv = std::max(inv, (ddim_step(zt, eps, t, 0, s) - z0).max_abs());
  }
  c.expect(inv <= 1e-10, "inversion error " + fmt("%.3g", inv));

  // z0 ~ N(m, v) elementwise; eps* = sqrt(1-a)(z_t - sqrt(a) m) / (a v + 1 - a).
  const int d = 8, n = 20000;
  const double v = 0.25;
  Tensor mean({1, d});
  for (int j = 0; j < d; ++j) mean[j] = -1.5 + 3.0 * j / (d - 1);
  const SamplePredictor optimal = [&](const Tensor& zt, int t, bool) {
    const double a = s.abar(t);
    Tensor e(zt.shape());
    for (size_t i = 0; i < e.size(); ++i) {
      e[i] = std::sqrt(1 - a) * (zt[i] - std::sqrt(a) * mean[i % d]) / (a * v + 1 - a);
    }
    return e;
  };
  const double aT = s.abar(1000);
  Tensor zT({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      zT[i * d + j] = std::sqrt(aT) * mean[j] + std::sqrt(aT * v + 1 - aT) * rng.normal();
  const Tensor out = ddim_sample_from(optimal, zT, s, 50, 1.0);
  double worst = 0.0;
  for (int j = 0; j < d; ++j) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += out[i * d + j];
    worst = std::max(worst, std::abs(m / n - mean[j]));
  }
  c.expect(worst <= 1e-2, "mean error " + fmt("%.3g", worst));
  return {c.ok(), c.ok() ? "inversion " + fmt("%.2g", inv) + ", 50-step mean error " +
                               fmt("%.2g", worst)
                         : c.failures()};
}

Outcome cfg_contract() {
  Rng rng(1006);
  Check c;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor ec = Tensor::randn({1, 4, 8, 8}, rng), eu = Tensor::randn({1, 4, 8, 8}, rng);
    c.expect(cfg_combine(ec, eu, 1.0) == ec, "scale 1 is not eps_cond");
    for (double scale : {0.0, 1.0, 5.0}) {
      c.expect(cfg_combine(eu, eu, scale) == eu, "equal inputs changed at " + fmt("%g", scale));
    }
  }
  return {c.ok(), c.ok() ? "100 draws, scales {0, 1, 5}" : c.failures()};
}

Outcome tag_accounting() {
  Rng rng(1007);
  Check c;
  for (int k = 0; k <= 64; ++k) {
    std::vector<int> ids;
    while (static_cast<int>(ids.size()) < k) {
      const int id = rng.uniform_int(0, kMaxTags - 1);
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
    const TagSet t(ids);
    const PackedBits p = encode_tag_ids(t);
    c.expect(p.bit_count == 13u * k, "k=" + std::to_string(k) + " costs " +
                                         std::to_string(p.bit_count) + " bits");
    c.expect(decode_tag_ids(p.bytes, k) == t, "roundtrip failed at k=" + std::to_string(k));
  }
  bool rejected = false;
  try {
    encode_tag_ids(TagSet({8192}));
  } catch (const OutOfRange&) {
    rejected = true;
  }
  c.expect(rejected, "id 8192 accepted");
  const TagSet full({1, 2, 3});
  int dropped = 0;
  for (int i = 0; i < 10000; ++i) dropped += dropout_tags(full, 0.1, rng).empty();
  const double rate = dropped / 1e4;
  c.expect(rate >= 0.085 && rate <= 0.115, "dropout rate " + fmt("%.4f", rate));
  return {c.ok(), c.ok() ? "13k bits for k=0..64, id 8192 rejected, dropout " + fmt("%.4f", rate)
                         : c.failures()};
}

Container random_container(Rng& rng) {
  Container c;
  c.quality = static_cast<uint8_t>(rng.uniform_int(0, kQualityLevels - 1));
  c.width = static_cast<uint16_t>(rng.uniform_int(1, 65535));
  c.height = static_cast<uint16_t>(rng.uniform_int(1, 65535));
  std::vector<int> ids;
  for (int i = 0, n = rng.uniform_int(0, 40); i < n; ++i) {
    const int id = rng.uniform_int(0, kMaxTags - 1);
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  c.tags = TagSet(ids);
  c.hyper.resize(rng.uniform_int(0, 200));
  c.main.resize(rng.uniform_int(0, 1000));
  for (auto& b : c.hyper) b = static_cast<uint8_t>(rng.next());
  for (auto& b : c.main) b = static_cast<uint8_t>(rng.next());
  return c;
}

// True when parsing throws a ParseError; any other outcome is reported.
bool typed_failure(std::span<const uint8_t> bytes, std::string* what) {
  try {
    parse(bytes);
    *what = "silent success";
  } catch (const ParseError&) {
    return true;
  } catch (const std::exception& e) {
    *what = std::string("untyped error: ") + e.what();
  }
  return false;
}

Outcome bitstream_fuzzing() {
  Rng rng(1009);
  Check c;
  size_t corruptions = 0;
  for (int i = 0; i < 10000; ++i) {
    const Container cont = random_container(rng);
    const auto bytes = assemble(cont);
    c.expect(parse(bytes) == cont, "roundtrip failed for container " + std::to_string(i));
    std::string what;
    // Truncation at a random length, plus the two boundaries.
    for (size_t len : {size_t{0}, bytes.size() - 1,
                       static_cast<size_t>(rng.uniform_int(0, static_cast<int>(bytes.size()) - 1))}) {
      ++corruptions;
      c.expect(typed_failure(std::span(bytes).first(len), &what),
               "truncation to " + std::to_string(len) + ": " + what);
    }
    // Appended bytes.
    auto padded = bytes;
    for (int k = 0, n = rng.uniform_int(1, 16); k < n; ++k) {
      padded.push_back(static_cast<uint8_t>(rng.next()));
    }
    ++corruptions;
    c.expect(typed_failure(padded, &what), "appended bytes: " + what);
    // Nonzero padding bits after the packed tag ids.
    const size_t tag_bits = 13 * cont.tags.size();
    if (tag_bits % 8 != 0) {
      auto bad = bytes;
      const int pad = 8 - static_cast<int>(tag_bits % 8);
      bad[kFixedHeaderBytes + tag_bits / 8] |= static_cast<uint8_t>(1u << rng.uniform_int(0, pad - 1));
      ++corruptions;
      c.expect(typed_failure(bad, &what), "padding bits: " + what);
    }
  }
  return {c.ok(), c.ok() ? "10000 containers, " + std::to_string(corruptions) +
                               " corruptions all typed"
                         : c.failures()};
}

// ---------------------------------------------------------------------------
// Trained-model criteria.

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Trained {
  PipelineConfig cfg, cfg_no_sc;
  Dataset test;
  TagDictionary dict;
};

bool has_checkpoints(const PipelineConfig& cfg, const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (!fs::exists(checkpoint_path(cfg, n))) return false;
  return true;
}

// Encoder-side rate and latent error of one checkpoint over the test set.
struct LadderPoint {
  double lambda = 0, bpp = 0, latent_mse = 0, bits_ratio_worst = 0;
  bool calibrated = true;
  std::string calibration_failure;
};

LadderPoint evaluate_checkpoint(const CodecModel& m, const Dataset& test) {
  LadderPoint p;
  p.lambda = m.lambda_rate;
  const int n = test.size();
  for (int i = 0; i < n; ++i) {
    const Tensor x = test.image(i);
    const EncodeResult e = encode_image(m, x);
    p.bpp += bits_per_pixel(e.bytes.size(), x.dim(2), x.dim(3)) / n;
    const Tensor d = e.latents.z - e.latents.z_hat;
    double se = 0;
    for (double v : d.vec()) se += v * v;
    p.latent_mse += se / d.size() / n;
    // Latent payload only; header and 13-bit tag ids are side information.
    const double actual = 8.0 * (e.container.hyper.size() + e.container.main.size());
    const double bound = 1.05 * e.latents.estimated_bits + 128.0;
    p.bits_ratio_worst = std::max(p.bits_ratio_worst, actual / std::max(bound, 1.0));
    if (actual > bound && p.calibrated) {
      p.calibrated = false;
      p.calibration_failure = "image " + std::to_string(i) + ": " + fmt("%.0f", actual) +
                              " bits > " + fmt("%.1f", bound);
    }
  }
  return p;
}

Outcome rate_ladder(const std::vector<LadderPoint>& pts) {
  int inversions = 0;
  for (size_t q = 1; q < pts.size(); ++q) inversions += !(pts[q].bpp < pts[q - 1].bpp);
  // Latent MSE must not increase as bpp increases.
  std::vector<LadderPoint> by_bpp = pts;
  std::sort(by_bpp.begin(), by_bpp.end(),
            [](const LadderPoint& a, const LadderPoint& b) { return a.bpp < b.bpp; });
  bool mse_ok = true;
  for (size_t i = 1; i < by_bpp.size(); ++i) {
    mse_ok = mse_ok && by_bpp[i].latent_mse <= by_bpp[i - 1].latent_mse;
  }
  std::string detail = "bpp";
  for (const auto& p : pts) detail += " " + fmt("%.4f", p.bpp);
  detail += " | latent MSE";
  for (const auto& p : pts) detail += " " + fmt("%.4f", p.latent_mse);
  detail += " | bpp inversions " + std::to_string(inversions);
  return {inversions <= 1 && mse_ok, detail};
}

Outcome rate_calibration(const std::vector<LadderPoint>& pts, int images) {
  bool ok = true;
  std::string detail;
  double worst = 0;
  for (const auto& p : pts) {
    worst = std::max(worst, p.bits_ratio_worst);
    if (!p.calibrated) {
      ok = false;
      detail = "lambda " + fmt("%g", p.lambda) + " " + p.calibration_failure;
    }
  }
  if (ok) {
    detail = std::to_string(images) + " images x " + std::to_string(pts.size()) +
             " models, worst actual / bound " + fmt("%.4f", worst);
  }
  return {ok, detail};
}

double mean_mid_divergence(const CodecModel& m, const Dataset& test) {
  NoGradGuard guard;
  double total = 0;
  for (int i = 0; i < test.size(); ++i) {
    const EncodeResult e = encode_image(m, test.image(i));
    const Tensor f = extract_semantic_features(m.denoiser, Var(e.latents.z)).values.value();
    const Tensor g = extract_semantic_features(m.denoiser, Var(e.latents.z_hat)).values.value();
    total += feature_divergence(f, g);
  }
  return total / test.size();
}

Outcome ablation(const CodecModel& with_sc, const CodecModel& without_sc, const Dataset& test) {
  const double a = mean_mid_divergence(with_sc, test);
  const double b = mean_mid_divergence(without_sc, test);
  return {a <= b + 0.01, "mid-block divergence with SC " + fmt("%.5f", a) + ", without " +
                             fmt("%.5f", b) + " (tolerance 0.01)"};
}

Outcome determinism(const PipelineConfig& cfg, const Dataset& test) {
  Check c;
  const std::string ckpt = checkpoint_path(cfg, quality_checkpoint_name(2));
  SamplingOptions opts = cfg.sampling;
  opts.seed = 17;
  auto run = [&] {
    const auto m = CodecModel::load(ckpt);
    std::vector<std::pair<std::vector<uint8_t>, Tensor>> out;
    for (int i = 0; i < 3; ++i) {
      const EncodeResult e = encode_image(*m, test.image(i));
      out.emplace_back(e.bytes, decode_image(*m, e.bytes, opts).image);
    }
    return out;
  };
  const auto a = run(), b = run();
  for (size_t i = 0; i < a.size(); ++i) {
    c.expect(a[i].first == b[i].first, "bitstream differs for image " + std::to_string(i));
    c.expect(a[i].second == b[i].second, "reconstruction differs for image " + std::to_string(i));
  }
  // A short codec training run repeated from the same checkpoint and seed.
  auto train = [&] {
    auto m = CodecModel::load(checkpoint_path(cfg, "stage1.ckpt"));
    Dataset small = test;
    const CodecData data = prepare_codec_data(*m, small);
    Rng rng(cfg.seed + 99);
    train_codec(*m, cfg, data, data, 10, cfg.stage2_lr, rng, nullptr, [](const std::string&) {});
    return m->to_archive().serialize();
  };
  c.expect(train() == train(), "training is not reproducible");
  return {c.ok(), c.ok() ? "3 images encoded and decoded twice, 10-step retrain identical"
                         : c.failures()};
}

}  // namespace
}  // namespace diffcodec

int main(int argc, char** argv) {
  using namespace diffcodec;
  CLI::App app{"diffcodec acceptance run"};
  std::string config_path = DIFFCODEC_SOURCE_DIR "/configs/acceptance.cfg";
  std::string workdir = "acceptance_run";
  bool reuse = false, skip_training = false;
  app.add_option("--config", config_path, "pipeline config");
  app.add_option("--workdir", workdir, "directory for checkpoints and logs");
  app.add_flag("--reuse", reuse, "keep checkpoints already present in the work directory");
  app.add_flag("--properties-only", skip_training, "run only the criteria that need no training");
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %-28s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
                o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  };

  report(1, "coding losslessness", coding_losslessness);
  report(3, "gaussian rate unit value", gaussian_unit_value);
  report(4, "zero-init control", zero_init_control);
  report(5, "sc-loss algebra", sc_loss_algebra);
  report(6, "diffusion algebra", diffusion_algebra);
  report(7, "cfg contract", cfg_contract);
  report(8, "tag accounting", tag_accounting);
  report(9, "bitstream fuzzing", bitstream_fuzzing);
  if (skip_training) return failed == 0 ? 0 : 1;

  PipelineConfig cfg;
  try {
    cfg = PipelineConfig::from(Config::load(config_path));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  if (fs::path(cfg.dictionary_path).is_relative()) {
    cfg.dictionary_path = (fs::path(DIFFCODEC_SOURCE_DIR) / cfg.dictionary_path).string();
  }
  if (!cfg.data_dir.empty() && fs::path(cfg.data_dir).is_relative()) {
    cfg.data_dir = (fs::path(DIFFCODEC_SOURCE_DIR) / cfg.data_dir).string();
  }
  cfg.output_dir = (fs::path(workdir) / "sc").string();
  PipelineConfig no_sc = cfg;
  no_sc.output_dir = (fs::path(workdir) / "no_sc").string();
  no_sc.weights.sem = 0.0;
  if (!reuse) fs::remove_all(workdir);
  fs::create_directories(cfg.output_dir);
  fs::create_directories(no_sc.output_dir);

  std::ofstream log_file(fs::path(workdir) / "training.log", std::ios::app);
  const Logger log = [&](const std::string& line) {
    log_file << line << "\n";
    log_file.flush();
  };
  const auto train_start = Clock::now();
  try {
    std::vector<std::string> prereq = {"vae.ckpt", "tagger.ckpt", "denoiser.ckpt"};
    std::vector<std::string> ladder = {"stage1.ckpt"};
    for (int q = 0; q < kQualityLevels; ++q) ladder.push_back(quality_checkpoint_name(q));
    if (!has_checkpoints(cfg, prereq)) run_stage(cfg, "prereq", log);
    if (!has_checkpoints(cfg, ladder)) {
      run_stage(cfg, "1", log);
      run_stage(cfg, "2", log);
    }
    // The ablation shares the prerequisites and differs only in the SC weight.
    for (const auto& n : prereq) {
      fs::copy_file(checkpoint_path(cfg, n), checkpoint_path(no_sc, n),
                    fs::copy_options::overwrite_existing);
    }
    if (!has_checkpoints(no_sc, {"stage1.ckpt"})) run_stage(no_sc, "1", log);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "training failed: %s\n", e.what());
    return 1;
  }
  std::printf("training finished in %.1f s (log in %s)\n", seconds_since(train_start),
              (fs::path(workdir) / "training.log").c_str());

  const TagDictionary dict = TagDictionary::load(cfg.dictionary_path);
  const Dataset test = load_data(cfg, dict).test;

  std::vector<LadderPoint> ladder;
  report(2, "rate calibration", [&] {
    for (int q = 0; q < kQualityLevels; ++q) {
      const auto m = CodecModel::load(checkpoint_path(cfg, quality_checkpoint_name(q)));
      ladder.push_back(evaluate_checkpoint(*m, test));
    }
    return rate_calibration(ladder, test.size());
  });
  report(10, "desk-scale rate ladder", [&] {
    if (ladder.size() != kQualityLevels) return Outcome{false, "ladder evaluation failed"};
    return rate_ladder(ladder);
  });
  report(11, "sc ablation direction", [&] {
    const auto a = CodecModel::load(checkpoint_path(cfg, "stage1.ckpt"));
    const auto b = CodecModel::load(checkpoint_path(no_sc, "stage1.ckpt"));
    return ablation(*a, *b, test);
  });
  report(12, "determinism", [&] { return determinism(cfg, test); });

  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
