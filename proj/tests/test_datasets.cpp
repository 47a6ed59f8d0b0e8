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

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "testing.hpp"
#include "wwt/datasets.hpp"
#include "wwt/errors.hpp"
#include "wwt/model.hpp"

using namespace wwt;
using namespace wwt::data;
namespace fs = std::filesystem;

namespace {

GenSpec small_spec(std::size_t train, std::size_t val = 0) {
  GenSpec s;
  s.seed = 7;
  s.train_size = train;
  s.val_size = val;
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wwt_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("spec validation and text round trip") {
  GenSpec s = small_spec(10, 4);
  CHECK_NOTHROW(s.validate());
  s.background = Background::kTexture;
  s.max_instances = 2;
  CHECK(spec_from_text(spec_to_text(s)).max_instances == 2);
  CHECK(spec_to_text(spec_from_text(spec_to_text(s))) == spec_to_text(s));
  CHECK_THROWS_AS(spec_from_text("seed=1\ncolour=red\n"), ConfigError);
  GenSpec bad = s;
  bad.min_instances = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.distractor_max_scale = 0.4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_background("flat") == Background::kFlat);
  CHECK_THROWS_AS(parse_background("plaid"), ConfigError);
}

TEST_CASE("generation is deterministic and index-addressed") {
  const GenSpec s = small_spec(12, 3);
  const Dataset a = generate(s), b = generate(s);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(encode_ppm(a.train[5].image) == encode_ppm(b.train[5].image));
  // A scene does not depend on how many others are generated.
  CHECK(generate_scene(s, "train", 5) == a.train[5]);
  GenSpec bigger = s;
  bigger.train_size = 40;
  CHECK(generate(bigger).train[11] == a.train[11]);
  GenSpec other = s;
  other.seed = 8;
  CHECK(!(generate(other).train[0] == a.train[0]));
  CHECK(!(a.val[0] == a.train[0]));
}

TEST_CASE("scene invariants over 1000 scenes") {
  for (Background bg : {Background::kFlat, Background::kNoise, Background::kTexture}) {
    GenSpec s = small_spec(bg == Background::kNoise ? 1000 : 200);
    s.background = bg;
    const Dataset ds = generate(s);
    std::vector<std::size_t> per_class(s.num_classes, 0);
    std::size_t overlaps = 0, bad_pixels = 0;
    for (const Scene& sc : ds.train) {
      REQUIRE(!sc.instances.empty());
      CHECK(sc.instances.size() <= s.max_instances);
      CHECK(sc.background == s.num_classes);
      const std::size_t W = s.image_size;
      std::vector<int> owner(W * W, -1);
      std::size_t best = 0, best_area = 0;
      for (std::size_t k = 0; k < sc.instances.size(); ++k) {
        const Instance& in = sc.instances[k];
        // Tight bounds recomputed from the mask cells.
        std::size_t x0 = W, y0 = W, x1 = 0, y1 = 0, area = 0;
        for (std::size_t y = 0; y < W; ++y)
          for (std::size_t x = 0; x < W; ++x)
            if (in.mask.at(x, y)) {
              x0 = std::min(x0, x);
              y0 = std::min(y0, y);
              x1 = std::max(x1, x + 1);
              y1 = std::max(y1, y + 1);
              ++area;
              overlaps += owner[y * W + x] != -1;
              owner[y * W + x] = static_cast<int>(k);
            }
        REQUIRE(area > 0);
        CHECK(in.box == Box{double(x0), double(y0), double(x1), double(y1)});
        if (area > best_area) {
          best_area = area;
          best = k;
        }
      }
      CHECK(sc.instances[best].cls == sc.image_label);
      for (float v : sc.image.data()) {
        bad_pixels += v < 0.0f || v > 1.0f || std::abs(v * 255.0f - std::round(v * 255.0f)) > 1e-3f;
      }
      ++per_class[sc.image_label];
    }
    CHECK(overlaps == 0);
    CHECK(bad_pixels == 0);
    if (ds.train.size() >= 1000) {
      const double uniform = double(ds.train.size()) / s.num_classes;
      for (std::size_t c : per_class) CHECK(std::abs(double(c) - uniform) <= 0.1 * uniform);
    }
  }
}

TEST_CASE("single-object split") {
  const GenSpec base = small_spec(10);
  const GenSpec so = single_object_spec(base, 50);
  CHECK(so.max_instances == 1);
  CHECK(so.val_size == 50);
  CHECK(so.seed != base.seed);
  const Dataset d = generate(so);
  CHECK(d.val.size() == 50);
  for (const Scene& sc : d.val) CHECK(sc.instances.size() == 1);
}

TEST_CASE("appearance") {
  std::map<std::pair<int, int>, int> seen;
  for (std::size_t c = 0; c < 8; ++c) {
    const auto col = class_color(c, 8);
    ++seen[{static_cast<int>(class_shape(c)), static_cast<int>(col[0] * 100 + col[1] * 10)}];
  }
  CHECK(seen.size() == 8);
  const auto cov = rasterize(ShapeKind::kSquare, 8, 8, 8, 16, 16);
  float total = 0;
  for (float v : cov) total += v;
  // Square half-width is 0.82 of the radius.
  CHECK(total == doctest::Approx(0.82 * 0.82 * 64).epsilon(0.03));
  CHECK(cov[8 * 16 + 8] == 1.0f);
  CHECK(cov[0] == 0.0f);
}

TEST_CASE("batches and ground truth views") {
  const Dataset ds = generate(small_spec(4));
  const auto b = stack_images(ds.train, 1, 3);
  CHECK(b.shape() == Shape{2, 64, 64, 3});
  CHECK(std::equal(ds.train[2].image.data().begin(), ds.train[2].image.data().end(),
                   b.data().begin() + 64 * 64 * 3));
  CHECK(gt_boxes(ds.train[0]).size() == ds.train[0].instances.size());
  const auto lm = label_map(ds.train[0]);
  std::size_t fg = 0;
  for (auto l : lm.labels) fg += l != 8;
  std::size_t area = 0;
  for (const auto& in : ds.train[0].instances) area += in.mask.area();
  CHECK(fg == area);
  CHECK_THROWS_AS(stack_images(std::vector<const Scene*>{}), ValueError);
}

TEST_CASE("probe stimuli") {
  const std::vector<std::pair<long, long>> offs{{0, 0}, {8, 0}, {16, 0}, {24, 0}};
  const ProbeStimuli p = probe_stimuli(2, offs);
  REQUIRE(p.images.size() == 4);
  const ProbeStimuli base = probe_stimuli(2, {{0, 0}});
  CHECK(p.images[0] == base.images[0]);
  auto histogram = [](const Tensor<float>& im) {
    std::vector<float> v(im.data().begin(), im.data().end());
    std::sort(v.begin(), v.end());
    return v;
  };
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(histogram(p.images[i]) == histogram(p.images[0]));
    CHECK(p.masks[i].area() == p.masks[0].area());
  }
  // One-patch shift: token grid of Pos1 is Pos0's shifted by one column.
  const WwtConfig cfg = micro_config();
  const auto params = cast_params<double>(init_backbone_params(cfg, 3));
  auto embed = [&](const Tensor<float>& im) {
    ad::Tape<double> tape;
    ParamBinding<double> pb(tape, params);
    return patch_embed(pb, cfg, tape.constant(im.cast<double>().reshaped(Shape{1, 64, 64, 3}))).value();
  };
  const auto e0 = embed(p.images[0]), e1 = embed(p.images[1]);
  const std::size_t G = 8, d = cfg.dim;
  double worst = 0;
  for (std::size_t r = 0; r < G; ++r)
    for (std::size_t c = 0; c + 1 < G; ++c)
      for (std::size_t k = 0; k < d; ++k)
        worst = std::max(worst, std::abs(e1[((r * G) + c + 1) * d + k] - e0[((r * G) + c) * d + k]));
  CHECK(worst == 0.0);
  CHECK_THROWS_AS(probe_stimuli(2, {{60, 0}}), ValueError);
  CHECK_THROWS_AS(probe_stimuli(9, {{0, 0}}), ValueError);
}

TEST_CASE("netpbm codecs") {
  const Dataset ds = generate(small_spec(1));
  const Scene& sc = ds.train[0];
  const std::string ppm = encode_ppm(sc.image);
  CHECK(ppm.rfind("P6", 0) == 0);
  CHECK(decode_ppm(ppm) == sc.image);
  const std::string pgm = encode_pgm(sc.instances[0].mask);
  CHECK(decode_pgm(pgm) == sc.instances[0].mask);
  try {
    decode_ppm(ppm.substr(0, ppm.size() - 10));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset " + std::to_string(ppm.size() - 10)) != std::string::npos);
  }
  CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n"), FormatError);
  CHECK_THROWS_AS(decode_ppm(ppm + "x"), FormatError);
  CHECK_THROWS_AS(decode_ppm("P6\n2 x\n255\n"), FormatError);
  std::string bad = pgm;
  bad.back() = 7;
  CHECK_THROWS_AS(decode_pgm(bad), FormatError);
}

TEST_CASE("save and load") {
  const fs::path dir = scratch("dataset");
  const Dataset ds = generate(small_spec(6, 2));
  save(ds, dir.string());
  const Dataset back = load(dir.string());
  CHECK(back.train == ds.train);
  CHECK(back.val == ds.val);
  CHECK(spec_to_text(back.spec) == spec_to_text(ds.spec));

  const std::string manifest_path = (dir / "manifest.txt").string();
  const std::string manifest = read_file(manifest_path);
  SUBCASE("manifest checksum is recomputed on load") {
    const auto cpos = manifest.rfind("checksum ");
    CHECK(manifest.substr(cpos + 9, 8).size() == 8);
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08x", crc32(manifest.substr(0, cpos)));
    CHECK(manifest.substr(cpos + 9, 8) == hex);
    std::string tampered = manifest;
    tampered[manifest.find("scene 0 ") + 8] ^= 1;  // flip the label digit
    write_file(manifest_path, tampered);
    CHECK_THROWS_AS(load(dir.string()), FormatError);
  }
  SUBCASE("a modified image fails its file checksum") {
    std::string img = read_file((dir / "train" / "000003.ppm").string());
    img[img.size() - 1] ^= 0x10;
    write_file((dir / "train" / "000003.ppm").string(), img);
    CHECK_THROWS_AS(load(dir.string()), FormatError);
  }
  SUBCASE("missing files and bad headers") {
    fs::remove(dir / "val" / "000001.ppm");
    CHECK_THROWS_AS(load(dir.string()), IoError);
    CHECK_THROWS_AS(load((dir / "nowhere").string()), IoError);
  }
  fs::remove_all(dir);
}
