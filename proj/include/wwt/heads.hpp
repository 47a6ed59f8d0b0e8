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

#ifndef WWT_HEADS_HPP_
#define WWT_HEADS_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "wwt/geometry.hpp"
#include "wwt/model.hpp"

namespace wwt {

enum class HeadKind { kClassify, kAutoencode, kDistill, kDetect, kTeacher };

// Adds (or re-initializes) the parameters of one head.
void add_head_params(ParamMap<float>& params, const WwtConfig& cfg, HeadKind head,
                     std::uint64_t seed);
bool has_head(const ParamMap<float>& params, HeadKind head);

// ---------------------------------------------------------------------------
// (a) classification

template <typename T>
struct SlotClassLogits {
  ad::Var<T> slot_logits;   // [B,S,C]
  ad::Var<T> image_logits;  // [B,C], mean of slot logits
};

template <typename T>
SlotClassLogits<T> classify(const ParamBinding<T>& p, const WwtConfig& cfg,
                            const ad::Var<T>& z);

// Label-smoothed cross-entropy averaged over rows. logits [N,C].
template <typename T>
ad::Var<T> cross_entropy(const ad::Var<T>& logits, const std::vector<std::size_t>& targets,
                         double smoothing = 0.0);

// Raw class activation for class p from per-slot probabilities [S,C] and a
// head-reduced mask [T,S]: (1/S) sum_s c(s,p) relu(A(s)), as a [grid,grid] map.
Tensor<float> class_activation(const Tensor<float>& slot_probs, const Tensor<float>& mask,
                               std::size_t p, std::size_t grid);

// Rescales to [0,1]; a constant map becomes all zeros.
Tensor<float> minmax_normalize(const Tensor<float>& map);

// ---------------------------------------------------------------------------
// (b) segmentation

struct Segmentation {
  std::size_t width = 0, height = 0;
  std::vector<std::size_t> labels;  // row-major, background == num_classes
  Tensor<float> scores;             // [C, H, W]
};

// Slot-softmaxed masks [T,S] upsampled bilinearly by r, then combined with
// slot class probabilities [S,C]. Pixels whose best score is below
// bg_threshold get the background label C.
Segmentation segment(const Tensor<float>& mask, const Tensor<float>& slot_probs,
                     std::size_t grid, std::size_t r, double bg_threshold = 0.25);

// Bilinear (half-pixel centers, clamped edges) upsampling of [H,W,K] by r.
Tensor<float> upsample_bilinear(const Tensor<float>& map, std::size_t r);

// ---------------------------------------------------------------------------
// (c) object discovery

struct DiscoveryOptions {
  double tau = 0.5;
  std::size_t min_area = 4;
  double dedup_iou = 0.5;
  int connectivity = 4;
};

struct RegionProposal {
  Mask mask;  // token grid resolution
  Box box;    // pixel coordinates
  std::size_t slot = 0;
  std::size_t head = 0;
  double concentration = 0.0;  // Herfindahl index of the component, (0,1]
};

// Connected components of a binary grid mask (4- or 8-connectivity), in
// raster order of their first cell.
std::vector<Mask> connected_components(const Mask& mask, int connectivity = 4);

// Herfindahl index sum_i w_i^2 of nonnegative weights normalized to sum 1.
double herfindahl(const std::vector<double>& weights);

// A [m,T,S]: binarize every head/slot mask at tau after min-max
// normalization, split into components, drop small ones, then greedily
// deduplicate by mask IoU (largest first).
std::vector<RegionProposal> discover_regions(const Tensor<float>& A, std::size_t grid,
                                             std::size_t patch_size,
                                             const DiscoveryOptions& opts = {});

// Highest concentration; ties by larger area, then lower slot, then lower head.
const RegionProposal& select_single_object(const std::vector<RegionProposal>& proposals);

// ---------------------------------------------------------------------------
// (d) detection

struct DetectionWeights {
  double cls = 1.0;
  double l1 = 5.0;
  double giou = 2.0;
  double bg = 0.1;
};

template <typename T>
struct DetOutputs {
  ad::Var<T> pooled;  // [B,S,d+2] mask-weighted tokens ⊕ coordinates
  ad::Var<T> boxes;   // [B,S,4] (cx,cy,w,h) in [0,1]
  ad::Var<T> logits;  // [B,S,C+1], last index is background
};

// Token centers (u,v) in [0,1]^2 in raster order: [T,2].
Tensor<float> token_coords(std::size_t grid);

// A is the head-reduced mask [B,T,S].
template <typename T>
DetOutputs<T> detect(const ParamBinding<T>& p, const WwtConfig& cfg, const ad::Var<T>& x,
                     const ad::Var<T>& A, const ad::Var<T>& z, double eps = 1e-6);

struct GtObject {
  std::array<double, 4> box{};  // normalized (cx,cy,w,h)
  std::size_t cls = 0;
};

struct Assignment {
  std::vector<std::size_t> gt_to_slot;
  double total_cost = 0.0;
};

// Exact minimum-cost injective assignment of rows to columns (rows <= cols).
Assignment hungarian(const std::vector<std::vector<double>>& cost);

// Matching cost matrix [gts × slots]. boxes [S,4], probs [S,C+1].
std::vector<std::vector<double>> matching_cost(const Tensor<float>& boxes,
                                               const Tensor<float>& probs,
                                               const std::vector<GtObject>& gts,
                                               const DetectionWeights& w = {});

Assignment match_bipartite(const Tensor<float>& boxes, const Tensor<float>& probs,
                           const std::vector<GtObject>& gts, const DetectionWeights& w = {});

// Differentiable GIoU of rows of two [n,4] (cx,cy,w,h) tensors -> [n].
template <typename T>
ad::Var<T> giou_rows(const ad::Var<T>& pred, const ad::Var<T>& target);

template <typename T>
struct DetectionLoss {
  ad::Var<T> total;
  double cls = 0, l1 = 0, giou = 0;
};

// One image: boxes [S,4], logits [S,C+1].
template <typename T>
DetectionLoss<T> detection_loss(const ad::Var<T>& boxes, const ad::Var<T>& logits,
                                const std::vector<GtObject>& gts, const Assignment& assignment,
                                const DetectionWeights& w = {});

// ---------------------------------------------------------------------------
// autoencoding / distillation

// Decoder prediction at token resolution [B,T,out] from the first `keep`
// slot-mask pairs (all when 0). A is head-reduced [B,T,S].
template <typename T>
ad::Var<T> autoencode_prediction(const ParamBinding<T>& p, const WwtConfig& cfg,
                                 const ad::Var<T>& A, const ad::Var<T>& z, bool distill,
                                 std::size_t keep = 0);

// Upsamples a [B,T,c] prediction to the target [B,H,W,c] grid by nearest
// replication and returns the mean squared error.
template <typename T>
ad::Var<T> reconstruction_mse(const ad::Var<T>& prediction, const ad::Var<T>& target,
                              std::size_t grid);

template <typename T>
ad::Var<T> autoencode_loss(const ParamBinding<T>& p, const WwtConfig& cfg, const ad::Var<T>& A,
                           const ad::Var<T>& z, const ad::Var<T>& target, bool distill,
                           std::size_t keep = 0);

// Frozen randomly initialized teacher: per-patch features [B,grid,grid,teacher_dim].
Tensor<float> teacher_features(const ParamMap<float>& params, const WwtConfig& cfg,
                               const Tensor<float>& images);

}  // namespace wwt

#endif  // WWT_HEADS_HPP_
