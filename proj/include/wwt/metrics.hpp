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

#ifndef WWT_METRICS_HPP_
#define WWT_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wwt/geometry.hpp"
#include "wwt/tensor.hpp"

namespace wwt::metrics {

// Named metric values with a sample count, kept in insertion order.
class EvalReport {
 public:
  explicit EvalReport(std::string task = {}) : task_(std::move(task)) {}

  void set(const std::string& name, double value, double lo = 0.0, double hi = 1.0);
  void set_class(const std::string& name, double value);
  void set_count(std::size_t n) { count_ = n; }
  void note(const std::string& key, const std::string& value);

  const std::string& task() const { return task_; }
  std::size_t count() const { return count_; }
  double get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, double>>& values() const { return values_; }
  const std::vector<std::pair<std::string, double>>& per_class() const { return per_class_; }

  // One "key: value" per line.
  std::string to_text() const;
  // JSON object with fixed key order: task, count, metrics, per_class, notes.
  std::string to_json() const;
  void write(const std::string& stem) const;  // stem.txt and stem.json

 private:
  std::string task_;
  std::size_t count_ = 0;
  std::vector<std::pair<std::string, double>> values_;
  std::vector<std::pair<std::string, double>> per_class_;
  std::vector<std::pair<std::string, std::string>> notes_;
};

// IoU that reports 0 instead of throwing when both operands are empty.
double iou_or_zero(const Box& a, const Box& b);
double iou_or_zero(const Mask& a, const Mask& b);

struct CorLocResult {
  double value = 0;
  std::size_t hits = 0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // images without ground truth
};

// One (possibly absent) prediction per image; a hit is IoU >= thresh with any gt box.
CorLocResult corloc(const std::vector<std::optional<Box>>& predictions,
                    const std::vector<std::vector<Box>>& gts, double iou_thresh = 0.5);

bool corloc_hit(const Box& prediction, const std::vector<Box>& gts, double iou_thresh = 0.5);

struct RecallResult {
  double recall = 0;
  double mean_predictions = 0;
  std::size_t matched = 0;
  std::size_t total_gts = 0;
};

RecallResult recall_at_iou(const std::vector<std::vector<Box>>& predictions,
                           const std::vector<std::vector<Box>>& gts, double iou_thresh = 0.5);

// Number of single-use greedy matches (IoU descending) between two box sets.
std::size_t greedy_matches(const std::vector<Box>& predictions, const std::vector<Box>& gts,
                           double iou_thresh);

struct GtInstance {
  std::size_t cls = 0;
  Mask mask;
};

enum class MboMode { kInstance, kClass };

// Per gt, best IoU over predictions; averaged per image, then over images.
double mbo(const std::vector<std::vector<Mask>>& predictions,
           const std::vector<std::vector<GtInstance>>& gts, MboMode mode);

// Merge same-class instances into one mask per class, ordered by class id.
std::vector<GtInstance> merge_by_class(const std::vector<GtInstance>& instances);

struct LabelMap {
  std::size_t width = 0, height = 0;
  std::vector<std::size_t> labels;
};

// Accumulates intersections and unions over a split.
class MiouAccumulator {
 public:
  explicit MiouAccumulator(std::size_t num_labels);
  void add(const LabelMap& prediction, const LabelMap& gt);
  // Mean IoU over labels present in any gt map.
  double value() const;
  std::vector<std::optional<double>> per_class() const;
  std::uint64_t intersection(std::size_t label) const { return inter_.at(label); }
  std::uint64_t union_count(std::size_t label) const { return union_.at(label); }

 private:
  std::size_t num_labels_;
  std::vector<std::uint64_t> inter_, union_, gt_count_;
};

double miou(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& gts,
            std::size_t num_labels);

struct DropIncrease {
  double drop = 0;      // percent
  double increase = 0;  // percent
};

// From full-image confidences y and masked confidences o of the predicted class.
DropIncrease drop_increase(const std::vector<double>& y, const std::vector<double>& o,
                           double eps = 1e-12);

// Class probabilities [B,C] for images [B,H,W,3].
using ConfidenceFn = std::function<Tensor<float>(const Tensor<float>&)>;

// maps [B,h,w] in [0,1], upsampled bilinearly to the image size when smaller.
DropIncrease drop_increase(const ConfidenceFn& model, const Tensor<float>& images,
                           const Tensor<float>& maps, double eps = 1e-12);

// Image multiplied pixelwise by the (upsampled) explanation map.
Tensor<float> apply_explanation(const Tensor<float>& images, const Tensor<float>& maps);

// Expected CorLoc of a box with corners drawn uniformly over the frame, by sampling.
double random_box_corloc(const std::vector<std::vector<Box>>& gts, double width, double height,
                         std::size_t samples_per_image, std::uint64_t seed,
                         double iou_thresh = 0.5);

}  // namespace wwt::metrics

#endif  // WWT_METRICS_HPP_
