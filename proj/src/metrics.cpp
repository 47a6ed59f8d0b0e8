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

#include "wwt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "wwt/errors.hpp"
#include "wwt/heads.hpp"
#include "wwt/rng.hpp"

namespace wwt::metrics {

void EvalReport::set(const std::string& name, double value, double lo, double hi) {
  if (!std::isfinite(value) || value < lo || value > hi) {
    throw ValueError("metric " + name + " = " + std::to_string(value) + " outside [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  for (auto& [k, v] : values_) {
    if (k == name) {
      v = value;
      return;
    }
  }
  values_.emplace_back(name, value);
}

void EvalReport::set_class(const std::string& name, double value) {
  per_class_.emplace_back(name, value);
}

void EvalReport::note(const std::string& key, const std::string& value) {
  notes_.emplace_back(key, value);
}

double EvalReport::get(const std::string& name) const {
  for (const auto& [k, v] : values_) {
    if (k == name) return v;
  }
  throw ValueError("no metric named " + name);
}

bool EvalReport::has(const std::string& name) const {
  return std::any_of(values_.begin(), values_.end(),
                     [&](const auto& kv) { return kv.first == name; });
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "task: " << task_ << "\n";
  os << "count: " << count_ << "\n";
  for (const auto& [k, v] : notes_) os << "# " << k << ": " << v << "\n";
  for (const auto& [k, v] : values_) os << k << ": " << v << "\n";
  for (const auto& [k, v] : per_class_) os << "class." << k << ": " << v << "\n";
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task_;
  j["count"] = count_;
  j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_) j["metrics"][k] = v;
  j["per_class"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : per_class_) j["per_class"][k] = v;
  j["notes"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : notes_) j["notes"][k] = v;
  return j.dump(2) + "\n";
}

void EvalReport::write(const std::string& stem) const {
  if (count_ == 0) throw ValueError("refusing to write a report with zero samples");
  for (const auto& [path, body] : {std::pair{stem + ".txt", to_text()},
                                   std::pair{stem + ".json", to_json()}}) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    f << body;
    if (!f) throw IoError("write failed: " + path);
  }
}

// ---------------------------------------------------------------------------

double iou_or_zero(const Box& a, const Box& b) {
  return a.empty() && b.empty() ? 0.0 : iou(a, b);
}

double iou_or_zero(const Mask& a, const Mask& b) {
  return a.empty() && b.empty() ? 0.0 : iou(a, b);
}

bool corloc_hit(const Box& prediction, const std::vector<Box>& gts, double iou_thresh) {
  return std::any_of(gts.begin(), gts.end(), [&](const Box& g) {
    return iou_or_zero(prediction, g) >= iou_thresh;
  });
}

CorLocResult corloc(const std::vector<std::optional<Box>>& predictions,
                    const std::vector<std::vector<Box>>& gts, double iou_thresh) {
  if (predictions.size() != gts.size()) {
    throw DimensionError("corloc: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(gts.size()) + " images");
  }
  CorLocResult r;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].empty()) {
      ++r.skipped;
      continue;
    }
    ++r.evaluated;
    if (predictions[i] && corloc_hit(*predictions[i], gts[i], iou_thresh)) ++r.hits;
  }
  r.value = r.evaluated ? static_cast<double>(r.hits) / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

std::size_t greedy_matches(const std::vector<Box>& predictions, const std::vector<Box>& gts,
                           double iou_thresh) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou_or_zero(predictions[p], gts[g]);
      if (v >= iou_thresh) pairs.emplace_back(-v, p, g);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_p(predictions.size()), used_g(gts.size());
  std::size_t matched = 0;
  for (const auto& [neg, p, g] : pairs) {
    if (used_p[p] || used_g[g]) continue;
    used_p[p] = used_g[g] = true;
    ++matched;
  }
  return matched;
}

RecallResult recall_at_iou(const std::vector<std::vector<Box>>& predictions,
                           const std::vector<std::vector<Box>>& gts, double iou_thresh) {
  if (predictions.size() != gts.size()) throw DimensionError("recall: image count mismatch");
  RecallResult r;
  std::size_t npred = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    npred += predictions[i].size();
    r.total_gts += gts[i].size();
    r.matched += greedy_matches(predictions[i], gts[i], iou_thresh);
  }
  r.recall = r.total_gts ? static_cast<double>(r.matched) / static_cast<double>(r.total_gts) : 0.0;
  r.mean_predictions =
      gts.empty() ? 0.0 : static_cast<double>(npred) / static_cast<double>(gts.size());
  return r;
}

std::vector<GtInstance> merge_by_class(const std::vector<GtInstance>& instances) {
  std::map<std::size_t, Mask> merged;
  for (const GtInstance& inst : instances) {
    auto [it, fresh] = merged.try_emplace(inst.cls, inst.mask);
    if (fresh) continue;
    if (it->second.width != inst.mask.width || it->second.height != inst.mask.height) {
      throw DimensionError("instance masks of different size");
    }
    for (std::size_t k = 0; k < inst.mask.data.size(); ++k) {
      it->second.data[k] = it->second.data[k] | inst.mask.data[k];
    }
  }
  std::vector<GtInstance> out;
  for (auto& [cls, mask] : merged) out.push_back({cls, std::move(mask)});
  return out;
}

double mbo(const std::vector<std::vector<Mask>>& predictions,
           const std::vector<std::vector<GtInstance>>& gts, MboMode mode) {
  if (predictions.size() != gts.size()) throw DimensionError("mbo: image count mismatch");
  double total = 0;
  std::size_t images = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const std::vector<GtInstance> targets =
        mode == MboMode::kClass ? merge_by_class(gts[i]) : gts[i];
    double sum = 0;
    std::size_t n = 0;
    for (const GtInstance& g : targets) {
      if (g.mask.empty()) continue;
      double best = 0;
      for (const Mask& p : predictions[i]) best = std::max(best, iou(p, g.mask));
      sum += best;
      ++n;
    }
    if (n == 0) continue;
    total += sum / static_cast<double>(n);
    ++images;
  }
  return images ? total / static_cast<double>(images) : 0.0;
}

// ---------------------------------------------------------------------------

MiouAccumulator::MiouAccumulator(std::size_t num_labels)
    : num_labels_(num_labels), inter_(num_labels), union_(num_labels), gt_count_(num_labels) {}

void MiouAccumulator::add(const LabelMap& prediction, const LabelMap& gt) {
  if (prediction.width != gt.width || prediction.height != gt.height ||
      prediction.labels.size() != gt.labels.size()) {
    throw DimensionError("label map resolution mismatch: " + std::to_string(prediction.width) +
                         "x" + std::to_string(prediction.height) + " vs " +
                         std::to_string(gt.width) + "x" + std::to_string(gt.height));
  }
  for (std::size_t k = 0; k < gt.labels.size(); ++k) {
    const std::size_t p = prediction.labels[k], g = gt.labels[k];
    if (p >= num_labels_ || g >= num_labels_) throw ValueError("label out of range");
    ++gt_count_[g];
    if (p == g) {
      ++inter_[g];
      ++union_[g];
    } else {
      ++union_[g];
      ++union_[p];
    }
  }
}

std::vector<std::optional<double>> MiouAccumulator::per_class() const {
  std::vector<std::optional<double>> out(num_labels_);
  for (std::size_t c = 0; c < num_labels_; ++c) {
    if (gt_count_[c] == 0) continue;
    out[c] = static_cast<double>(inter_[c]) / static_cast<double>(union_[c]);
  }
  return out;
}

double MiouAccumulator::value() const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& v : per_class()) {
    if (!v) continue;
    sum += *v;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double miou(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& gts,
            std::size_t num_labels) {
  if (predictions.size() != gts.size()) throw DimensionError("miou: image count mismatch");
  MiouAccumulator acc(num_labels);
  for (std::size_t i = 0; i < gts.size(); ++i) acc.add(predictions[i], gts[i]);
  return acc.value();
}

// ---------------------------------------------------------------------------

DropIncrease drop_increase(const std::vector<double>& y, const std::vector<double>& o,
                           double eps) {
  if (y.size() != o.size() || y.empty()) {
    throw DimensionError("drop_increase needs matching non-empty confidence lists");
  }
  double drop = 0;
  std::size_t inc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    drop += std::max(0.0, y[i] - o[i]) / std::max(y[i], eps);
    if (o[i] > y[i]) ++inc;
  }
  const auto n = static_cast<double>(y.size());
  return {100.0 * drop / n, 100.0 * static_cast<double>(inc) / n};
}

Tensor<float> apply_explanation(const Tensor<float>& images, const Tensor<float>& maps) {
  if (images.rank() != 4 || maps.rank() != 3 || maps.dim(0) != images.dim(0)) {
    throw DimensionError("apply_explanation: images " + to_string(images.shape()) + ", maps " +
                         to_string(maps.shape()));
  }
  const std::size_t B = images.dim(0), H = images.dim(1), W = images.dim(2), c = images.dim(3);
  const std::size_t h = maps.dim(1), w = maps.dim(2);
  if (h == 0 || H % h != 0 || W % w != 0 || H / h != W / w) {
    throw DimensionError("explanation map " + to_string(maps.shape()) +
                         " does not tile image " + to_string(images.shape()));
  }
  const std::size_t r = H / h;
  Tensor<float> out(images.shape());
  for (std::size_t b = 0; b < B; ++b) {
    Tensor<float> m(Shape{h, w, 1});
    std::copy_n(maps.data().begin() + static_cast<std::ptrdiff_t>(b * h * w), h * w,
                m.data().begin());
    const Tensor<float> up = r > 1 ? upsample_bilinear(m, r) : m;
    for (std::size_t k = 0; k < H * W; ++k) {
      const float e = std::clamp(up[k], 0.0f, 1.0f);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t idx = (b * H * W + k) * c + ch;
        out[idx] = images[idx] * e;
      }
    }
  }
  return out;
}

DropIncrease drop_increase(const ConfidenceFn& model, const Tensor<float>& images,
                           const Tensor<float>& maps, double eps) {
  const Tensor<float> full = model(images);
  const Tensor<float> masked = model(apply_explanation(images, maps));
  if (full.rank() != 2 || full.shape() != masked.shape() || full.dim(0) != images.dim(0)) {
    throw DimensionError("confidence function must return [B,C]");
  }
  const std::size_t B = full.dim(0), C = full.dim(1);
  std::vector<double> y(B), o(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = full.data().subspan(b * C, C);
    const auto c = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    y[b] = full[b * C + c];
    o[b] = masked[b * C + c];
  }
  return drop_increase(y, o, eps);
}

double random_box_corloc(const std::vector<std::vector<Box>>& gts, double width, double height,
                         std::size_t samples_per_image, std::uint64_t seed, double iou_thresh) {
  if (samples_per_image == 0) throw ValueError("samples_per_image must be positive");
  double total = 0;
  std::size_t images = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].empty()) continue;
    CounterRng rng(seed, i, "random_box");
    std::size_t hits = 0;
    for (std::size_t s = 0; s < samples_per_image; ++s) {
      const double xa = rng.uniform(0, width), xb = rng.uniform(0, width);
      const double ya = rng.uniform(0, height), yb = rng.uniform(0, height);
      const Box b{std::min(xa, xb), std::min(ya, yb), std::max(xa, xb), std::max(ya, yb)};
      if (corloc_hit(b, gts[i], iou_thresh)) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(samples_per_image);
    ++images;
  }
  return images ? total / static_cast<double>(images) : 0.0;
}

}  // namespace wwt::metrics
