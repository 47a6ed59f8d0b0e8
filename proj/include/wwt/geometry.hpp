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

#ifndef WWT_GEOMETRY_HPP_
#define WWT_GEOMETRY_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace wwt {

// Axis-aligned box in continuous pixel coordinates, [x0,x1) × [y0,y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 > x0 ? x1 - x0 : 0.0; }
  double height() const { return y1 > y0 ? y1 - y0 : 0.0; }
  double area() const { return width() * height(); }
  bool empty() const { return area() <= 0.0; }
  friend bool operator==(const Box&, const Box&) = default;
};

// Row-major binary mask.
struct Mask {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t w, std::size_t h) : width(w), height(h), data(w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
  std::size_t area() const;
  bool empty() const { return area() == 0; }
  // Tight bounds of the set cells, scaled by `cell` pixels per cell.
  Box bounds(double cell = 1.0) const;
  // Each cell replicated into a factor×factor block.
  Mask upscaled(std::size_t factor) const;
  friend bool operator==(const Mask&, const Mask&) = default;
};

// Intersection over union; throws ValueError when both operands are empty.
double iou(const Box& a, const Box& b);
double iou(const Mask& a, const Mask& b);

// Generalized IoU of two boxes (1 for identical boxes, in (-1, 1]).
double giou(const Box& a, const Box& b);

// Normalized (cx, cy, w, h) <-> pixel corners.
Box box_from_cxcywh(double cx, double cy, double w, double h, double scale = 1.0);

}  // namespace wwt

#endif  // WWT_GEOMETRY_HPP_
