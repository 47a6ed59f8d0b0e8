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

#include "wwt/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <boost/crc.hpp>

#include "wwt/errors.hpp"
#include "wwt/rng.hpp"

namespace wwt::data {

namespace fs = std::filesystem;

namespace {

constexpr int kSupersample = 4;
constexpr std::uint32_t kMaxSubSeeds = 64;
constexpr int kPlacementTries = 24;
constexpr double kMinVisible = 0.5;

float quantize(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

bool inside(ShapeKind shape, double u, double v) {
  switch (shape) {
    case ShapeKind::kDisk: return u * u + v * v <= 1.0;
    case ShapeKind::kSquare: return std::abs(u) <= 0.82 && std::abs(v) <= 0.82;
    case ShapeKind::kTriangle:
      return v <= 0.85 && v >= -0.95 && std::abs(u) <= (v + 0.95) / 1.8 * 0.98;
    case ShapeKind::kCross:
      return (std::abs(u) <= 0.32 && std::abs(v) <= 0.96) ||
             (std::abs(v) <= 0.32 && std::abs(u) <= 0.96);
    case ShapeKind::kRing: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.3;
    }
    case ShapeKind::kDiamond: return std::abs(u) + std::abs(v) <= 1.0;
    case ShapeKind::kBar: return std::abs(u) <= 0.96 && std::abs(v) <= 0.42;
    case ShapeKind::kSemicircle: return u * u + v * v <= 1.0 && v >= -0.1;
  }
  return false;
}

std::array<float, 3> hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (i % 6) {
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    case 5: r = v, g = p, b = q; break;
    default: break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

std::size_t dominant_class(const GenSpec& spec, const std::string& split, std::size_t index) {
  const std::size_t C = spec.num_classes;
  CounterRng rng(spec.seed, index / C, split + ".classes");
  std::vector<std::size_t> perm(C);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = C - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  return perm[index % C];
}

// Background pixels [H,W,3] before sprites.
std::vector<double> paint_background(const GenSpec& spec, CounterRng& rng) {
  const std::size_t N = spec.image_size;
  const double gray = rng.uniform(0.2, 0.8);
  std::array<double, 3> base{};
  for (double& c : base) c = gray + rng.uniform(-0.06, 0.06);
  std::vector<double> px(N * N * 3);
  const double theta = rng.uniform(0.0, M_PI), freq = rng.uniform(2.0, 6.0);
  const double phase = rng.uniform(0.0, 2 * M_PI);
  for (std::size_t y = 0; y < N; ++y) {
    for (std::size_t x = 0; x < N; ++x) {
      double shade = 0;
      if (spec.background == Background::kTexture) {
        const double s = (static_cast<double>(x) * std::cos(theta) +
                          static_cast<double>(y) * std::sin(theta)) / static_cast<double>(N);
        shade = 0.12 * std::sin(2 * M_PI * freq * s + phase);
      }
      for (int c = 0; c < 3; ++c) px[(y * N + x) * 3 + c] = base[c] + shade;
    }
  }
  return px;
}

struct Placed {
  std::size_t cls;
  std::vector<float> coverage;
  std::size_t full_area;
};

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

std::string to_string(Background b) {
  switch (b) {
    case Background::kFlat: return "flat";
    case Background::kNoise: return "noise";
    case Background::kTexture: return "texture";
  }
  return "?";
}

Background parse_background(const std::string& s) {
  if (s == "flat") return Background::kFlat;
  if (s == "noise") return Background::kNoise;
  if (s == "texture") return Background::kTexture;
  throw ConfigError("unknown background mode '" + s + "'");
}

void GenSpec::validate() const {
  if (image_size < 8) throw ConfigError("image_size must be at least 8");
  if (num_classes < 2 || num_classes > 64) throw ConfigError("num_classes must be in [2, 64]");
  if (min_instances < 1 || max_instances < min_instances || max_instances > kMaxInstances) {
    throw ConfigError("instances per scene must satisfy 1 <= min <= max <= " +
                      std::to_string(kMaxInstances));
  }
  if (!(0 < min_scale && min_scale <= max_scale && max_scale <= 1.0)) {
    throw ConfigError("scale range must satisfy 0 < min <= max <= 1");
  }
  if (max_instances > 1 &&
      !(0 < distractor_min_scale && distractor_min_scale <= distractor_max_scale &&
        distractor_max_scale < min_scale)) {
    throw ConfigError("distractor scales must lie strictly below the dominant scale range");
  }
}

ShapeKind class_shape(std::size_t cls) { return static_cast<ShapeKind>(cls % kNumShapes); }

std::array<float, 3> class_color(std::size_t cls, std::size_t num_classes) {
  // Hues interleaved so neighbouring class ids are far apart on the wheel.
  const double h = static_cast<double>((cls * 3) % num_classes) / static_cast<double>(num_classes);
  return hsv(h + 0.02, 0.85, 0.95);
}

std::vector<float> rasterize(ShapeKind shape, double cx, double cy, double size,
                             std::size_t width, std::size_t height) {
  std::vector<float> cov(width * height, 0.0f);
  const double r = size / 2;
  const auto lo_x = static_cast<long>(std::floor(cx - r)), hi_x = static_cast<long>(std::ceil(cx + r));
  const auto lo_y = static_cast<long>(std::floor(cy - r)), hi_y = static_cast<long>(std::ceil(cy + r));
  for (long y = std::max(0L, lo_y); y < std::min(static_cast<long>(height), hi_y); ++y) {
    for (long x = std::max(0L, lo_x); x < std::min(static_cast<long>(width), hi_x); ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSupersample;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSupersample;
          hits += inside(shape, (px - cx) / r, (py - cy) / r) ? 1 : 0;
        }
      }
      cov[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] =
          static_cast<float>(hits) / (kSupersample * kSupersample);
    }
  }
  return cov;
}

Scene generate_scene(const GenSpec& spec, const std::string& split, std::size_t index) {
  spec.validate();
  const std::size_t N = spec.image_size, C = spec.num_classes;
  const std::size_t dominant = dominant_class(spec, split, index);
  for (std::uint32_t sub = 0; sub < kMaxSubSeeds; ++sub) {
    CounterRng rng(spec.seed, index, split + ".scene." + std::to_string(sub));
    const std::size_t count =
        spec.min_instances + rng.below(spec.max_instances - spec.min_instances + 1);
    std::vector<double> px = paint_background(spec, rng);

    std::vector<Placed> placed;
    std::vector<Box> extents;
    bool feasible = true;
    for (std::size_t k = 0; k < count && feasible; ++k) {
      const bool is_dominant = k + 1 == count;
      std::size_t cls = dominant;
      if (!is_dominant) {
        cls = rng.below(C - 1);
        if (cls >= dominant) ++cls;
      }
      const double scale = is_dominant ? rng.uniform(spec.min_scale, spec.max_scale)
                                       : rng.uniform(spec.distractor_min_scale,
                                                     spec.distractor_max_scale);
      const double size = scale * static_cast<double>(N);
      feasible = false;
      for (int attempt = 0; attempt < kPlacementTries && !feasible; ++attempt) {
        const double cx = rng.uniform(size / 2, static_cast<double>(N) - size / 2);
        const double cy = rng.uniform(size / 2, static_cast<double>(N) - size / 2);
        const Box ext{cx - size / 2, cy - size / 2, cx + size / 2, cy + size / 2};
        // Distractors keep clear of each other; the dominant sprite may overlap them.
        bool clash = false;
        if (!is_dominant) {
          for (const Box& e : extents) clash = clash || iou(ext, e) > 0.0;
        }
        if (clash) continue;
        std::vector<float> cov = rasterize(class_shape(cls), cx, cy, size, N, N);
        const auto area = static_cast<std::size_t>(
            std::count_if(cov.begin(), cov.end(), [](float c) { return c >= 0.5f; }));
        if (area < 4) continue;
        placed.push_back({cls, std::move(cov), area});
        extents.push_back(ext);
        feasible = true;
      }
    }
    if (!feasible) continue;

    // Composite in order; later sprites occlude earlier ones.
    Scene scene;
    scene.index = index;
    scene.sub_seed = sub;
    scene.background = C;
    std::vector<int> owner(N * N, -1);
    for (std::size_t k = 0; k < placed.size(); ++k) {
      const auto color = class_color(placed[k].cls, C);
      const double gain = rng.uniform(0.85, 1.0);
      for (std::size_t i = 0; i < N * N; ++i) {
        const double a = placed[k].coverage[i];
        if (a <= 0) continue;
        for (int c = 0; c < 3; ++c) px[i * 3 + c] = (1 - a) * px[i * 3 + c] + a * gain * color[c];
        if (a >= 0.5) owner[i] = static_cast<int>(k);
      }
    }
    if (spec.background == Background::kNoise) {
      for (double& v : px) v += 0.05 * rng.normal();
    }
    scene.image = Tensor<float>(Shape{N, N, 3});
    for (std::size_t i = 0; i < px.size(); ++i) scene.image[i] = quantize(px[i]);

    std::size_t best_area = 0;
    for (std::size_t k = 0; k < placed.size() && feasible; ++k) {
      Instance inst;
      inst.cls = placed[k].cls;
      inst.mask = Mask(N, N);
      for (std::size_t i = 0; i < N * N; ++i) inst.mask.data[i] = owner[i] == static_cast<int>(k);
      const std::size_t area = inst.mask.area();
      if (area < 4 || static_cast<double>(area) < kMinVisible * static_cast<double>(placed[k].full_area)) {
        feasible = false;
        break;
      }
      inst.box = inst.mask.bounds();
      if (area > best_area) {
        best_area = area;
        scene.image_label = inst.cls;
      }
      scene.instances.push_back(std::move(inst));
    }
    if (!feasible || scene.image_label != dominant) continue;
    return scene;
  }
  throw ConfigError("no feasible layout for " + split + " scene " + std::to_string(index) +
                    " after " + std::to_string(kMaxSubSeeds) + " sub-seeds");
}

GenSpec single_object_spec(const GenSpec& base, std::size_t size) {
  GenSpec s = base;
  s.min_instances = s.max_instances = 1;
  s.seed = base.seed ^ 0x5eed0b1ec7ULL;
  s.train_size = 0;
  s.val_size = size;
  return s;
}

Dataset generate(const GenSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.train.reserve(spec.train_size);
  for (std::size_t i = 0; i < spec.train_size; ++i) ds.train.push_back(generate_scene(spec, "train", i));
  ds.val.reserve(spec.val_size);
  for (std::size_t i = 0; i < spec.val_size; ++i) ds.val.push_back(generate_scene(spec, "val", i));
  return ds;
}

// ---------------------------------------------------------------------------

Tensor<float> stack_images(const std::vector<const Scene*>& scenes) {
  if (scenes.empty()) throw ValueError("empty batch");
  const Shape& s = scenes.front()->image.shape();
  Tensor<float> out(Shape{scenes.size(), s[0], s[1], s[2]});
  const std::size_t n = numel(s);
  for (std::size_t b = 0; b < scenes.size(); ++b) {
    if (scenes[b]->image.shape() != s) throw DimensionError("mixed image sizes in batch");
    std::copy_n(scenes[b]->image.data().begin(), n,
                out.data().begin() + static_cast<std::ptrdiff_t>(b * n));
  }
  return out;
}

Tensor<float> stack_images(const std::vector<Scene>& scenes, std::size_t begin, std::size_t end) {
  std::vector<const Scene*> ptrs;
  for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&scenes.at(i));
  return stack_images(ptrs);
}

std::vector<Box> gt_boxes(const Scene& scene) {
  std::vector<Box> out;
  for (const Instance& inst : scene.instances) out.push_back(inst.box);
  return out;
}

std::vector<metrics::GtInstance> gt_instances(const Scene& scene) {
  std::vector<metrics::GtInstance> out;
  for (const Instance& inst : scene.instances) out.push_back({inst.cls, inst.mask});
  return out;
}

metrics::LabelMap label_map(const Scene& scene) {
  metrics::LabelMap m;
  m.width = scene.image.dim(1);
  m.height = scene.image.dim(0);
  m.labels.assign(m.width * m.height, scene.background);
  for (const Instance& inst : scene.instances) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      if (inst.mask.data[i]) m.labels[i] = inst.cls;
    }
  }
  return m;
}

ProbeStimuli probe_stimuli(std::size_t cls, const std::vector<std::pair<long, long>>& offsets,
                           std::size_t image_size, double sprite_size,
                           std::pair<long, long> origin, std::size_t num_classes) {
  if (cls >= num_classes) throw ValueError("probe class out of range");
  const auto side = static_cast<std::size_t>(std::ceil(sprite_size));
  const std::vector<float> sprite =
      rasterize(class_shape(cls), sprite_size / 2, sprite_size / 2, sprite_size, side, side);
  const auto color = class_color(cls, num_classes);
  const float gray = quantize(0.5);
  ProbeStimuli out;
  for (const auto& [dx, dy] : offsets) {
    const long x0 = origin.first + dx, y0 = origin.second + dy;
    const auto N = static_cast<long>(image_size);
    if (x0 < 0 || y0 < 0 || x0 + static_cast<long>(side) > N || y0 + static_cast<long>(side) > N) {
      throw ValueError("probe offset (" + std::to_string(dx) + ", " + std::to_string(dy) +
                       ") moves the sprite out of frame");
    }
    Tensor<float> img(Shape{image_size, image_size, 3}, gray);
    Mask mask(image_size, image_size);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const float a = sprite[y * side + x];
        const std::size_t i = (static_cast<std::size_t>(y0) + y) * image_size +
                              static_cast<std::size_t>(x0) + x;
        for (int c = 0; c < 3; ++c) img[i * 3 + c] = quantize((1 - a) * gray + a * color[c]);
        mask.data[i] = a >= 0.5f;
      }
    }
    out.images.push_back(std::move(img));
    out.masks.push_back(std::move(mask));
    out.offsets.emplace_back(dx, dy);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct HeaderParser {
  const std::string& bytes;
  const std::string& what;
  std::size_t pos = 0;

  void skip_space() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  }
  std::size_t number() {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start) {
      throw FormatError(what + ": expected a number at byte offset " + std::to_string(start));
    }
    return std::stoul(bytes.substr(start, pos - start));
  }
};

std::pair<std::size_t, std::size_t> netpbm_header(const std::string& bytes, const char* magic,
                                                  const std::string& what, std::size_t& pos) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0) {
    throw FormatError(what + ": bad magic at byte offset 0, expected " + magic);
  }
  HeaderParser hp{bytes, what, 2};
  const std::size_t w = hp.number(), h = hp.number(), maxval = hp.number();
  if (maxval != 255) {
    throw FormatError(what + ": unsupported maxval " + std::to_string(maxval) +
                      " before byte offset " + std::to_string(hp.pos));
  }
  if (hp.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[hp.pos]))) {
    throw FormatError(what + ": missing separator at byte offset " + std::to_string(hp.pos));
  }
  pos = hp.pos + 1;
  return {w, h};
}

void expect_payload(const std::string& bytes, std::size_t pos, std::size_t n,
                    const std::string& what) {
  if (bytes.size() - pos < n) {
    throw FormatError(what + ": truncated at byte offset " + std::to_string(bytes.size()) +
                      ", pixel data starting at byte " + std::to_string(pos) + " needs " +
                      std::to_string(n) + " bytes");
  }
  if (bytes.size() - pos > n) {
    throw FormatError(what + ": trailing bytes at byte offset " + std::to_string(pos + n));
  }
}

}  // namespace

std::string encode_ppm(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("PPM needs [H,W,3]");
  std::string out = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) +
                    "\n255\n";
  out.reserve(out.size() + image.size());
  for (float v : image.data()) {
    out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  return out;
}

Tensor<float> decode_ppm(const std::string& bytes, const std::string& what) {
  std::size_t pos = 0;
  const auto [w, h] = netpbm_header(bytes, "P6", what, pos);
  expect_payload(bytes, pos, w * h * 3, what);
  Tensor<float> img(Shape{h, w, 3});
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) / 255.0f;
  }
  return img;
}

std::string encode_pgm(const Mask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) +
                    "\n255\n";
  for (std::uint8_t v : mask.data) out.push_back(static_cast<char>(v ? 255 : 0));
  return out;
}

Mask decode_pgm(const std::string& bytes, const std::string& what) {
  std::size_t pos = 0;
  const auto [w, h] = netpbm_header(bytes, "P5", what, pos);
  expect_payload(bytes, pos, w * h, what);
  Mask m(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const auto v = static_cast<unsigned char>(bytes[pos + i]);
    if (v != 0 && v != 255) {
      throw FormatError(what + ": non-binary mask value at byte offset " + std::to_string(pos + i));
    }
    m.data[i] = v ? 1 : 0;
  }
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

std::uint32_t crc32(const std::string& bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

// ---------------------------------------------------------------------------

std::string spec_to_text(const GenSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << "seed=" << s.seed << "\n"
     << "image_size=" << s.image_size << "\n"
     << "num_classes=" << s.num_classes << "\n"
     << "min_instances=" << s.min_instances << "\n"
     << "max_instances=" << s.max_instances << "\n"
     << "min_scale=" << s.min_scale << "\n"
     << "max_scale=" << s.max_scale << "\n"
     << "distractor_min_scale=" << s.distractor_min_scale << "\n"
     << "distractor_max_scale=" << s.distractor_max_scale << "\n"
     << "background=" << to_string(s.background) << "\n"
     << "train_size=" << s.train_size << "\n"
     << "val_size=" << s.val_size << "\n";
  return os.str();
}

GenSpec spec_from_text(const std::string& text) {
  GenSpec s;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string v) {
      const auto a = v.find_first_not_of(" \t\r"), b = v.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : v.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    try {
      if (key == "seed") s.seed = std::stoull(val);
      else if (key == "image_size") s.image_size = std::stoul(val);
      else if (key == "num_classes") s.num_classes = std::stoul(val);
      else if (key == "min_instances") s.min_instances = std::stoul(val);
      else if (key == "max_instances") s.max_instances = std::stoul(val);
      else if (key == "min_scale") s.min_scale = std::stod(val);
      else if (key == "max_scale") s.max_scale = std::stod(val);
      else if (key == "distractor_min_scale") s.distractor_min_scale = std::stod(val);
      else if (key == "distractor_max_scale") s.distractor_max_scale = std::stod(val);
      else if (key == "background") s.background = parse_background(val);
      else if (key == "train_size") s.train_size = std::stoul(val);
      else if (key == "val_size") s.val_size = std::stoul(val);
      else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  s.validate();
  return s;
}

namespace {

std::string scene_stem(const std::string& split, std::size_t index) {
  std::ostringstream os;
  os << split << "/" << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

void save(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  std::ostringstream body;
  body << "wwt-dataset " << kManifestVersion << "\n";
  std::istringstream spec_lines(spec_to_text(ds.spec));
  for (std::string line; std::getline(spec_lines, line);) body << "spec " << line << "\n";
  for (const auto& [name, scenes] : {std::pair<std::string, const std::vector<Scene>*>{"train", &ds.train},
                                     {"val", &ds.val}}) {
    fs::create_directories(fs::path(dir) / name, ec);
    if (ec) throw IoError("cannot create " + (fs::path(dir) / name).string() + ": " + ec.message());
    body << "split " << name << " " << scenes->size() << "\n";
    for (const Scene& sc : *scenes) {
      const std::string stem = scene_stem(name, sc.index);
      boost::crc_32_type crc;
      const std::string ppm = encode_ppm(sc.image);
      crc.process_bytes(ppm.data(), ppm.size());
      write_file((fs::path(dir) / (stem + ".ppm")).string(), ppm);
      for (std::size_t k = 0; k < sc.instances.size(); ++k) {
        const std::string pgm = encode_pgm(sc.instances[k].mask);
        crc.process_bytes(pgm.data(), pgm.size());
        write_file((fs::path(dir) / (stem + "_" + std::to_string(k) + ".pgm")).string(), pgm);
      }
      body << "scene " << sc.index << " " << sc.image_label << " " << sc.background << " "
           << sc.sub_seed << " " << sc.instances.size() << " " << hex32(crc.checksum()) << "\n";
      for (const Instance& inst : sc.instances) {
        body << "inst " << inst.cls << " " << inst.box.x0 << " " << inst.box.y0 << " "
             << inst.box.x1 << " " << inst.box.y1 << "\n";
      }
    }
  }
  const std::string text = body.str();
  write_file((fs::path(dir) / "manifest.txt").string(), text + "checksum " + hex32(crc32(text)) + "\n");
}

Dataset load(const std::string& dir) {
  const std::string path = (fs::path(dir) / "manifest.txt").string();
  const std::string text = read_file(path);
  const auto cpos = text.rfind("checksum ");
  if (cpos == std::string::npos || (cpos > 0 && text[cpos - 1] != '\n')) {
    throw FormatError(path + ": missing checksum line");
  }
  const std::string recorded = text.substr(cpos + 9, 8);
  if (recorded != hex32(crc32(text.substr(0, cpos)))) {
    throw FormatError(path + ": checksum mismatch (recorded " + recorded + ", computed " +
                      hex32(crc32(text.substr(0, cpos))) + ")");
  }
  std::istringstream is(text.substr(0, cpos));
  std::string line, word;
  std::size_t lineno = 1;
  auto fail = [&](const std::string& msg) {
    throw FormatError(path + ":" + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(is, line) || line != "wwt-dataset " + std::to_string(kManifestVersion)) {
    fail("bad header '" + line + "'");
  }
  std::string spec_text;
  Dataset ds;
  std::vector<Scene>* split = nullptr;
  std::string split_name;
  std::size_t expected = 0;
  bool spec_done = false;
  auto close_split = [&]() {
    if (split && split->size() != expected) fail("split " + split_name + " is short");
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    ls >> word;
    if (word == "spec") {
      spec_text += line.substr(5) + "\n";
      continue;
    }
    if (!spec_done) {
      ds.spec = spec_from_text(spec_text);
      spec_done = true;
    }
    if (word == "split") {
      close_split();
      ls >> split_name >> expected;
      if (split_name == "train") split = &ds.train;
      else if (split_name == "val") split = &ds.val;
      else fail("unknown split " + split_name);
    } else if (word == "scene") {
      if (!split) fail("scene before split");
      Scene sc;
      std::size_t n = 0;
      std::string crc_hex;
      if (!(ls >> sc.index >> sc.image_label >> sc.background >> sc.sub_seed >> n >> crc_hex)) {
        fail("malformed scene record");
      }
      const std::string stem = (fs::path(dir) / scene_stem(split_name, sc.index)).string();
      boost::crc_32_type crc;
      const std::string ppm = read_file(stem + ".ppm");
      crc.process_bytes(ppm.data(), ppm.size());
      sc.image = decode_ppm(ppm, stem + ".ppm");
      for (std::size_t k = 0; k < n; ++k) {
        ++lineno;
        if (!std::getline(is, line)) fail("missing instance record");
        std::istringstream il(line);
        Instance inst;
        if (!(il >> word >> inst.cls >> inst.box.x0 >> inst.box.y0 >> inst.box.x1 >> inst.box.y1) ||
            word != "inst") {
          fail("malformed instance record");
        }
        const std::string pgm_path = stem + "_" + std::to_string(k) + ".pgm";
        const std::string pgm = read_file(pgm_path);
        crc.process_bytes(pgm.data(), pgm.size());
        inst.mask = decode_pgm(pgm, pgm_path);
        if (inst.mask.bounds() != inst.box) fail("instance box does not bound its mask");
        sc.instances.push_back(std::move(inst));
      }
      if (hex32(crc.checksum()) != crc_hex) fail("file checksum mismatch for " + stem);
      split->push_back(std::move(sc));
    } else {
      fail("unexpected record '" + word + "'");
    }
  }
  if (!spec_done) ds.spec = spec_from_text(spec_text);
  close_split();
  return ds;
}

}  // namespace wwt::data
