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

#ifndef WWT_DATASETS_HPP_
#define WWT_DATASETS_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wwt/geometry.hpp"
#include "wwt/metrics.hpp"
#include "wwt/tensor.hpp"

namespace wwt::data {

// Scenes never hold more instances than WWT-Micro has slots.
inline constexpr std::size_t kMaxInstances = 8;
inline constexpr int kManifestVersion = 1;

enum class ShapeKind { kDisk, kSquare, kTriangle, kCross, kRing, kDiamond, kBar, kSemicircle };
inline constexpr std::size_t kNumShapes = 8;

enum class Background { kFlat, kNoise, kTexture };

std::string to_string(Background b);
Background parse_background(const std::string& s);

struct GenSpec {
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  std::size_t num_classes = 8;
  std::size_t min_instances = 1;
  std::size_t max_instances = 3;
  // Sprite diameter as a fraction of the image side.
  double min_scale = 0.36;
  double max_scale = 0.48;
  double distractor_min_scale = 0.14;
  double distractor_max_scale = 0.24;
  Background background = Background::kNoise;
  std::size_t train_size = 5000;
  std::size_t val_size = 1000;

  void validate() const;
};

struct Instance {
  std::size_t cls = 0;
  Mask mask;
  Box box;  // tight pixel bounds of mask
  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Scene {
  std::size_t index = 0;
  std::uint32_t sub_seed = 0;  // retries needed to find a feasible layout
  Tensor<float> image;         // [H,W,3], multiples of 1/255
  std::size_t image_label = 0;
  std::size_t background = 0;  // label id of background pixels (== num_classes)
  std::vector<Instance> instances;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Dataset {
  GenSpec spec;
  std::vector<Scene> train;
  std::vector<Scene> val;
};

// Canonical appearance of a class.
ShapeKind class_shape(std::size_t cls);
std::array<float, 3> class_color(std::size_t cls, std::size_t num_classes);

// Subpixel coverage of a sprite centered at (cx, cy) with diameter `size`, [H,W].
std::vector<float> rasterize(ShapeKind shape, double cx, double cy, double size,
                             std::size_t width, std::size_t height);

// Held-out single-object split: one sprite per scene, a disjoint seed stream.
GenSpec single_object_spec(const GenSpec& base, std::size_t size);

Scene generate_scene(const GenSpec& spec, const std::string& split, std::size_t index);
Dataset generate(const GenSpec& spec);

// Batches: images [B,H,W,3] and labels.
Tensor<float> stack_images(const std::vector<Scene>& scenes, std::size_t begin, std::size_t end);
Tensor<float> stack_images(const std::vector<const Scene*>& scenes);
std::vector<Box> gt_boxes(const Scene& scene);
std::vector<metrics::GtInstance> gt_instances(const Scene& scene);
metrics::LabelMap label_map(const Scene& scene);

struct ProbeStimuli {
  std::vector<Tensor<float>> images;  // each [H,W,3]
  std::vector<Mask> masks;
  std::vector<std::pair<long, long>> offsets;
};

// The same sprite of class `cls` translated by pixel offsets on a flat background.
ProbeStimuli probe_stimuli(std::size_t cls, const std::vector<std::pair<long, long>>& offsets,
                           std::size_t image_size = 64, double sprite_size = 16.0,
                           std::pair<long, long> origin = {8, 24}, std::size_t num_classes = 8);

// Netpbm codecs; decode errors report the byte offset.
std::string encode_ppm(const Tensor<float>& image);
Tensor<float> decode_ppm(const std::string& bytes, const std::string& what = "PPM");
std::string encode_pgm(const Mask& mask);
Mask decode_pgm(const std::string& bytes, const std::string& what = "PGM");

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

std::uint32_t crc32(const std::string& bytes);

void save(const Dataset& ds, const std::string& dir);
Dataset load(const std::string& dir);

std::string spec_to_text(const GenSpec& spec);
GenSpec spec_from_text(const std::string& text);

}  // namespace wwt::data

#endif  // WWT_DATASETS_HPP_
