/* Copyright 2026 The WWT Authors. All Rights Reserved.

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

#ifndef WWT_TRAINER_HPP_
#define WWT_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wwt/datasets.hpp"
#include "wwt/heads.hpp"
#include "wwt/metrics.hpp"
#include "wwt/model.hpp"
#include "wwt/optim.hpp"

namespace wwt::train {

enum class Task { kClassify, kDetect, kSegment, kOcl };

std::string to_string(Task t);
Task parse_task(const std::string& s);

struct RunConfig {
  WwtConfig model = micro_config();
  data::GenSpec data;
  std::string data_dir;  // load from here when set, otherwise generate in memory

  Task task = Task::kClassify;
  double lambda_cls = 1.0;
  double lambda_ae = 0.1;
  double label_smoothing = 0.1;
  // Finetuning.
  std::size_t ocl_keep = 6;      // slot-mask pairs reconstructed by the OCL loss
  double lambda_distill = 1.0;   // teacher-feature term of the OCL loss
  bool freeze_backbone = false;
  DetectionWeights det;

  AdamWConfig optim;
  double min_lr = 1e-5;
  std::size_t warmup_epochs = 2;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t max_steps = 0;  // 0: no cap
  bool hflip = true;
  double stop_at_accuracy = 0;  // stop once val top-1 reaches this (0: never)
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  std::string out_dir;

  void validate() const;
  std::string to_text() const;
  // key=value lines; unknown keys are a ConfigError.
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double loss = 0;
  double loss_cls = 0;
  double loss_aux = 0;  // AE, detection or segmentation term
  double val_accuracy = -1;
  double wall_seconds = 0;
};

class RunLog {
 public:
  void append(const EpochRecord& r);
  const std::vector<EpochRecord>& records() const { return records_; }
  std::string to_text() const;
  void write(const std::string& path) const;

 private:
  std::vector<EpochRecord> records_;
};

struct StepLosses {
  double total = 0;
  double cls = 0;
  double aux = 0;
};

// Forward, backward and AdamW update on one batch. `grads_out`, when given,
// receives the gradients before the update.
struct Trainer {
  RunConfig cfg;
  ParamMap<float> params;
  AdamWState<float> opt;
  ParamMap<float> teacher;  // frozen, OCL only
  long total_steps = 1;
  long warmup_steps = 0;

  Trainer(RunConfig config, ParamMap<float> init);
  StepLosses step(const std::vector<const data::Scene*>& batch, ParamMap<float>* grads_out = nullptr);
  bool trainable(const std::string& name) const;
};

// Loss of one batch on a fresh tape; used by step() and by gradient checks.
template <typename T>
ad::Var<T> batch_loss(const ParamBinding<T>& p, const RunConfig& cfg,
                      const std::vector<const data::Scene*>& batch, const Tensor<float>& pixels,
                      const ParamMap<float>* teacher, StepLosses* parts = nullptr);

struct TrainResult {
  ParamMap<float> params;
  RunLog log;
};

using EpochHook = std::function<void(const EpochRecord&)>;

// Pretraining (classification + AE) or finetuning, depending on cfg.task.
TrainResult train(const RunConfig& cfg, const data::Dataset& ds,
                  std::optional<ParamMap<float>> init = std::nullopt,
                  const EpochHook& hook = {});

ParamMap<float> init_params(const RunConfig& cfg);
void save_run(const std::string& stem, const ParamMap<float>& params, const RunConfig& cfg);
RunConfig load_run_config(const std::string& checkpoint);

// ---------------------------------------------------------------------------
// Inference.

struct Inference {
  Tensor<float> probs;        // [B,C] image class probabilities
  Tensor<float> slot_probs;   // [B,S,C]
  Tensor<float> masks;        // [B,m,T,S] final mask logits
  Tensor<float> masks_mean;   // [B,T,S] head mean
  Tensor<float> tokens;       // [B,T,d]
  Tensor<float> slots;        // [B,S,d]
  Tensor<float> boxes;        // [B,S,4] when a detection head exists
  Tensor<float> det_probs;    // [B,S,C+1]
};

Inference infer(const ParamMap<float>& params, const WwtConfig& cfg, const Tensor<float>& pixels,
                std::size_t batch_size = 64);

double accuracy(const ParamMap<float>& params, const WwtConfig& cfg,
                const std::vector<data::Scene>& scenes);

// ---------------------------------------------------------------------------
// Evaluation.

enum class EvalTask { kClassify, kDiscover, kSegment, kDetect, kOcl, kExplain };
std::string to_string(EvalTask t);
EvalTask parse_eval_task(const std::string& s);

struct EvalOptions {
  DiscoveryOptions discovery;
  double bg_threshold = 0.25;
  std::size_t random_box_samples = 2000;
  std::string out_stem;  // writes stem.txt, stem.json and interchange files when set
};

// Per-image discovery output.
struct DiscoveryResult {
  std::vector<RegionProposal> proposals;
  std::optional<Box> selected;  // pixel coordinates
};

std::vector<DiscoveryResult> discover(const Inference& inf, const WwtConfig& cfg,
                                      const DiscoveryOptions& opts);

metrics::EvalReport evaluate(EvalTask task, const ParamMap<float>& params, const WwtConfig& cfg,
                             const std::vector<data::Scene>& scenes, const EvalOptions& opts = {});

// Interchange records "image_id x0 y0 x1 y1 score class [mask.pgm]", class -1
// when class-agnostic: stem.proposals.txt (masks under stem.masks/),
// stem.selected.txt (one per image with proposals) and stem.gt.txt.
void write_discovery_interchange(const std::string& stem, const std::vector<DiscoveryResult>& res,
                                 const std::vector<data::Scene>& scenes, std::size_t patch_size);

// ---------------------------------------------------------------------------
// Translation-invariance probe.

struct ProbeRow {
  std::size_t position = 0;
  long dx = 0, dy = 0;
  std::size_t slot = 0;
  double slot_similarity = 0;
  double token_similarity = 0;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;
  double mean_slot = 0;   // over positions 1..n-1
  double mean_token = 0;
  std::string to_text() const;
  std::string to_csv() const;
};

ProbeReport probe_invariance(const ParamMap<float>& params, const WwtConfig& cfg,
                             const data::ProbeStimuli& stimuli);

ProbeReport probe_invariance(const ParamMap<float>& params, const WwtConfig& cfg,
                             std::size_t cls, const std::vector<std::pair<long, long>>& offsets,
                             double sprite_size);

// ---------------------------------------------------------------------------
// Visualization.

inline constexpr float kOverlayAlpha = 0.6f;

// out = img + alpha * heat * (color - img), heat in [0,1] per pixel [H,W].
Tensor<float> blend(const Tensor<float>& image, const Tensor<float>& heat,
                    const std::array<float, 3>& color, float alpha = kOverlayAlpha);

// Per image: one overlay per slot, the CA map, the segmentation and the
// discovery boxes. Returns the written paths.
std::vector<std::string> export_overlays(const ParamMap<float>& params, const WwtConfig& cfg,
                                         const std::vector<data::Scene>& scenes,
                                         const std::string& out_dir,
                                         const DiscoveryOptions& opts = {});

std::string flops_report(const WwtConfig& cfg);

}  // namespace wwt::train

#endif  // WWT_TRAINER_HPP_
