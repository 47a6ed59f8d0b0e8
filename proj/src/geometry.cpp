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

#include "wwt/geometry.hpp"

#include <algorithm>
#include <limits>

#include "wwt/errors.hpp"

namespace wwt {

std::size_t Mask::area() const {
  std::size_t n = 0;
  for (std::uint8_t v : data) n += v ? 1 : 0;
  return n;
}

Box Mask::bounds(double cell) const {
  std::size_t x0 = width, y0 = height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (!at(x, y)) continue;
      any = true;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x + 1);
      y1 = std::max(y1, y + 1);
    }
  }
  if (!any) return Box{};
  return Box{x0 * cell, y0 * cell, x1 * cell, y1 * cell};
}

Mask Mask::upscaled(std::size_t factor) const {
  Mask out(width * factor, height * factor);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = at(x / factor, y / factor);
  return out;
}

double iou(const Box& a, const Box& b) {
  const double ua = a.area() + b.area();
  if (ua <= 0.0) throw ValueError("iou of two empty boxes");
  const Box inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
                  std::min(a.y1, b.y1)};
  const double i = inter.area();
  return i / (ua - i);
}

double iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw DimensionError("mask iou on different resolutions");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += (a.data[i] && b.data[i]) ? 1 : 0;
    uni += (a.data[i] || b.data[i]) ? 1 : 0;
  }
  if (uni == 0) throw ValueError("iou of two empty masks");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double giou(const Box& a, const Box& b) {
  const Box inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
                  std::min(a.y1, b.y1)};
  const double i = inter.area();
  const double u = a.area() + b.area() - i;
  const Box hull{std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1),
                 std::max(a.y1, b.y1)};
  const double c = hull.area();
  if (c <= 0.0) throw ValueError("giou of degenerate boxes");
  return (u > 0.0 ? i / u : 0.0) - (c - u) / c;
}

Box box_from_cxcywh(double cx, double cy, double w, double h, double scale) {
  return Box{(cx - w / 2) * scale, (cy - h / 2) * scale, (cx + w / 2) * scale,
             (cy + h / 2) * scale};
}

}  // namespace wwt
