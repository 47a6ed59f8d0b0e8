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
#include <cmath>

#include "testing.hpp"
#include "wwt/errors.hpp"
#include "wwt/metrics.hpp"

using namespace wwt;
using namespace wwt::metrics;

namespace {

Mask row_mask(std::size_t width, std::size_t from, std::size_t to) {
  Mask m(width, 1);
  for (std::size_t x = from; x < to; ++x) m.at(x, 0) = 1;
  return m;
}

LabelMap label_grid(std::vector<std::size_t> labels) {
  return LabelMap{4, 4, std::move(labels)};
}

}  // namespace

TEST_CASE("iou") {
  CHECK(iou(Box{1, 2, 5, 7}, Box{1, 2, 5, 7}) == 1.0);
  CHECK(iou(Box{0, 0, 1, 1}, Box{2, 2, 3, 3}) == 0.0);
  // Cell-count oracle for [0,0,2,2] vs [1,1,3,3].
  Mask a(4, 4), b(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      a.at(x, y) = x < 2 && y < 2;
      b.at(x, y) = x >= 1 && x < 3 && y >= 1 && y < 3;
    }
  CHECK(iou(a, b) == 1.0 / 7);
  CHECK(iou(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}) == 1.0 / 7);
  CHECK_THROWS_AS(iou(Box{}, Box{}), ValueError);
  CHECK_THROWS_AS(iou(Mask(2, 2), Mask(2, 2)), ValueError);
  CHECK(iou_or_zero(Mask(2, 2), Mask(2, 2)) == 0.0);
}

TEST_CASE("corloc") {
  const std::vector<std::vector<Box>> gts{{{0, 0, 10, 10}}, {{20, 20, 30, 30}}, {{5, 5, 15, 15}}};
  SUBCASE("3-image toy with one hit") {
    const std::vector<std::optional<Box>> pred{Box{0, 0, 10, 9}, Box{0, 0, 5, 5}, std::nullopt};
    const auto r = corloc(pred, gts);
    CHECK(r.value == 1.0 / 3);
    CHECK(r.hits == 1);
    CHECK(r.evaluated == 3);
  }
  SUBCASE("only ground-truth boxes count") {
    // The prediction sits on an unannotated distractor.
    CHECK(!corloc_hit(Box{40, 40, 50, 50}, {{0, 0, 10, 10}}));
    CHECK(corloc_hit(Box{0, 0, 10, 10}, {{40, 40, 50, 50}, {0, 0, 10, 10}}));
  }
  SUBCASE("images without ground truth are skipped") {
    auto g = gts;
    g[1].clear();
    const auto r = corloc({Box{0, 0, 10, 10}, Box{0, 0, 1, 1}, Box{5, 5, 15, 15}}, g);
    CHECK(r.value == 1.0);
    CHECK(r.skipped == 1);
    CHECK(r.evaluated == 2);
  }
  SUBCASE("image order does not matter") {
    const std::vector<std::optional<Box>> pred{Box{0, 0, 10, 9}, Box{21, 21, 30, 30}, Box{0, 0, 1, 1}};
    const std::vector<std::optional<Box>> rp{pred[2], pred[0], pred[1]};
    const std::vector<std::vector<Box>> rg{gts[2], gts[0], gts[1]};
    CHECK(corloc(pred, gts).value == corloc(rp, rg).value);
  }
}

TEST_CASE("recall") {
  const std::vector<std::vector<Box>> gts{{{0, 0, 10, 10}, {0, 0, 10, 9}}};
  CHECK(recall_at_iou({{{0, 0, 10, 10}}}, gts).recall == 0.5);
  CHECK(recall_at_iou({{}}, gts).recall == 0.0);
  const auto full = recall_at_iou({{{0, 0, 10, 9}, {0, 0, 10, 10}, {50, 50, 60, 60}}}, gts);
  CHECK(full.recall == 1.0);
  CHECK(full.mean_predictions == 3.0);
  // Enlarging the prediction set never lowers recall.
  std::vector<Box> preds;
  double last = 0;
  for (const Box& b : {Box{40, 40, 45, 45}, Box{0, 0, 10, 8}, Box{1, 0, 10, 10}}) {
    preds.push_back(b);
    const double r = recall_at_iou({preds}, gts).recall;
    CHECK(r >= last);
    last = r;
  }
}

TEST_CASE("mbo") {
  const std::vector<std::vector<GtInstance>> gts{{{0, row_mask(10, 0, 10)}}};
  CHECK(mbo({{row_mask(10, 0, 3), row_mask(10, 0, 6)}}, gts, MboMode::kInstance) ==
        doctest::Approx(0.6).epsilon(1e-15));
  CHECK(mbo({{row_mask(10, 0, 10)}}, gts, MboMode::kInstance) == 1.0);
  CHECK(mbo({{Mask(10, 1)}}, gts, MboMode::kInstance) == 0.0);
  CHECK(mbo({{}}, gts, MboMode::kInstance) == 0.0);

  SUBCASE("class mode merges instances of one class") {
    const std::vector<std::vector<GtInstance>> two{
        {{1, row_mask(8, 0, 2)}, {1, row_mask(8, 4, 6)}, {0, row_mask(8, 6, 8)}}};
    const auto merged = merge_by_class(two[0]);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].cls == 0);
    CHECK(merged[1].mask.area() == 4);
    const std::vector<std::vector<Mask>> pred{{row_mask(8, 0, 6)}};
    // Instance: (2/6 + 2/6 + 0) / 3. Class: (4/6 + 0) / 2.
    CHECK(mbo(pred, two, MboMode::kInstance) == doctest::Approx(2.0 / 9));
    CHECK(mbo(pred, two, MboMode::kClass) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("per-image averaging, bounded, monotone in predictions") {
    const std::vector<std::vector<GtInstance>> g2{{{0, row_mask(4, 0, 4)}},
                                                  {{0, row_mask(4, 0, 1)}, {1, row_mask(4, 2, 4)}}};
    std::vector<std::vector<Mask>> pred{{row_mask(4, 0, 2)}, {row_mask(4, 0, 1)}};
    const double a = mbo(pred, g2, MboMode::kInstance);
    CHECK(a == doctest::Approx((0.5 + 0.5) / 2));
    pred[1].push_back(row_mask(4, 1, 4));
    const double b = mbo(pred, g2, MboMode::kInstance);
    CHECK(b >= a);
    CHECK(b <= 1.0);
  }
}

TEST_CASE("miou") {
  // Labels 0 and 1 plus background 2.
  const auto gt = label_grid({0, 0, 1, 1,
                              0, 0, 1, 1,
                              2, 2, 2, 2,
                              2, 2, 2, 2});
  const auto pred = label_grid({0, 0, 0, 1,
                                0, 0, 1, 1,
                                2, 2, 2, 1,
                                2, 2, 2, 2});
  SUBCASE("hand-counted toy") {
    MiouAccumulator acc(3);
    acc.add(pred, gt);
    CHECK(acc.intersection(0) == 4);
    CHECK(acc.union_count(0) == 5);
    CHECK(acc.intersection(1) == 3);
    CHECK(acc.union_count(1) == 5);
    CHECK(acc.intersection(2) == 7);
    CHECK(acc.union_count(2) == 8);
    CHECK(acc.value() == doctest::Approx((0.8 + 0.6 + 0.875) / 3).epsilon(1e-15));
  }
  SUBCASE("perfect and constant-background predictions") {
    CHECK(miou({gt}, {gt}, 3) == 1.0);
    const auto bg = label_grid(std::vector<std::size_t>(16, 2));
    MiouAccumulator acc(3);
    acc.add(bg, gt);
    const auto pc = acc.per_class();
    CHECK(*pc[0] == 0.0);
    CHECK(*pc[1] == 0.0);
    CHECK(*pc[2] == 0.5);
  }
  SUBCASE("aggregate counts, not per-image means; accumulation matches the batch call") {
    const auto gt2 = label_grid(std::vector<std::size_t>(16, 0));
    const auto pred2 = label_grid(std::vector<std::size_t>(16, 0));
    MiouAccumulator acc(3);
    acc.add(pred, gt);
    acc.add(pred2, gt2);
    CHECK(acc.value() == miou({pred, pred2}, {gt, gt2}, 3));
    CHECK(acc.value() == miou({pred2, pred}, {gt2, gt}, 3));
    // Class 0 over both images: inter 20, union 21.
    CHECK(*acc.per_class()[0] == doctest::Approx(20.0 / 21));
  }
  SUBCASE("classes absent from ground truth are not averaged") {
    const auto g = label_grid(std::vector<std::size_t>(16, 2));
    MiouAccumulator acc(3);
    acc.add(g, g);
    CHECK(acc.value() == 1.0);
    CHECK(!acc.per_class()[0].has_value());
  }
  SUBCASE("errors") {
    MiouAccumulator acc(3);
    CHECK_THROWS_AS(acc.add(LabelMap{2, 2, {0, 0, 0, 0}}, gt), DimensionError);
    CHECK_THROWS_AS(acc.add(label_grid(std::vector<std::size_t>(16, 5)), gt), ValueError);
  }
}

TEST_CASE("drop and increase") {
  const auto di = drop_increase({0.8, 0.5}, {0.4, 0.6});
  CHECK(di.drop == doctest::Approx(25.0).epsilon(1e-14));
  CHECK(di.increase == 50.0);

  const auto images = wwt::testing::random_tensor<float>(Shape{2, 8, 8, 3}, 1, 0, 1);
  const ConfidenceFn mean_color = [](const Tensor<float>& im) {
    const std::size_t B = im.dim(0), n = im.size() / B;
    Tensor<float> out(Shape{B, 2});
    for (std::size_t b = 0; b < B; ++b) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += im[b * n + i];
      out[b * 2] = static_cast<float>(0.25 + 0.5 * s / n);
      out[b * 2 + 1] = 1 - out[b * 2];
    }
    return out;
  };
  SUBCASE("a unit explanation changes nothing") {
    const auto r = drop_increase(mean_color, images, Tensor<float>(Shape{2, 2, 2}, 1.0f));
    CHECK(r.drop == 0.0);
    CHECK(r.increase == 0.0);
    CHECK(apply_explanation(images, Tensor<float>(Shape{2, 4, 4}, 1.0f)) == images);
  }
  SUBCASE("a constant model never drops") {
    const ConfidenceFn constant = [](const Tensor<float>& im) {
      return Tensor<float>(Shape{im.dim(0), 3}, {0.2f, 0.5f, 0.3f, 0.2f, 0.5f, 0.3f});
    };
    const auto r = drop_increase(constant, images, Tensor<float>(Shape{2, 8, 8}));
    CHECK(r.drop == 0.0);
    CHECK(r.increase == 0.0);
  }
  SUBCASE("masking with zeros darkens the image") {
    const auto masked = apply_explanation(images, Tensor<float>(Shape{2, 1, 1}));
    for (float v : masked.data()) CHECK(v == 0.0f);
    CHECK_THROWS_AS(apply_explanation(images, Tensor<float>(Shape{2, 3, 3})), DimensionError);
  }
  CHECK_THROWS_AS(drop_increase({0.1}, {}), DimensionError);
}

TEST_CASE("random box baseline") {
  const std::vector<std::vector<Box>> gts(50, std::vector<Box>{{16, 16, 48, 48}});
  const double a = random_box_corloc(gts, 64, 64, 200, 1);
  CHECK(a == random_box_corloc(gts, 64, 64, 200, 1));
  CHECK(a > 0.0);
  CHECK(a < 0.2);
  // Midpoint-rule integral over the four corner coordinates.
  const int n = 48;
  double hit = 0;
  for (int xa = 0; xa < n; ++xa)
    for (int xb = 0; xb < n; ++xb)
      for (int ya = 0; ya < n; ++ya)
        for (int yb = 0; yb < n; ++yb) {
          const double u0 = (xa + 0.5) * 64 / n, u1 = (xb + 0.5) * 64 / n;
          const double v0 = (ya + 0.5) * 64 / n, v1 = (yb + 0.5) * 64 / n;
          const double iw = std::max(0.0, std::min(std::max(u0, u1), 48.0) - std::max(std::min(u0, u1), 16.0));
          const double ih = std::max(0.0, std::min(std::max(v0, v1), 48.0) - std::max(std::min(v0, v1), 16.0));
          const double inter = iw * ih;
          const double uni = std::abs(u1 - u0) * std::abs(v1 - v0) + 1024 - inter;
          if (inter / uni >= 0.5) hit += 1;
        }
  const double expected = hit / (double(n) * n * n * n);
  // 10000 samples: standard error near 0.002.
  CHECK(std::abs(a - expected) < 0.01);
}

TEST_CASE("EvalReport") {
  EvalReport r("discover");
  r.set_count(12);
  r.set("corloc", 0.5);
  r.set("mean_predictions", 2.5, 0, 100);
  r.set_class("0", 0.25);
  r.note("tau", "0.5");
  CHECK(r.get("corloc") == 0.5);
  CHECK(r.has("mean_predictions"));
  CHECK_THROWS_AS(r.get("missing"), ValueError);
  CHECK_THROWS_AS(r.set("recall", 1.5), ValueError);
  CHECK(r.to_text() ==
        "task: discover\ncount: 12\n# tau: 0.5\ncorloc: 0.5\nmean_predictions: 2.5\nclass.0: 0.25\n");
  const std::string j = r.to_json();
  const auto pos = [&](const char* k) { return j.find(k); };
  CHECK(pos("\"task\"") < pos("\"count\""));
  CHECK(pos("\"count\"") < pos("\"metrics\""));
  CHECK(pos("\"metrics\"") < pos("\"per_class\""));
  CHECK(pos("\"per_class\"") < pos("\"notes\""));
  CHECK(pos("\"corloc\"") < pos("\"mean_predictions\""));
  EvalReport empty("x");
  CHECK_THROWS_AS(empty.write("/tmp/wwt_report_never"), ValueError);
}
