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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "wwt/errors.hpp"
#include "wwt/trainer.hpp"

namespace wwt::train {

namespace fs = std::filesystem;
using ad::Var;

namespace {

template <typename T>
void append(Tensor<float>& dst, const Tensor<T>& src, std::size_t offset) {
  std::copy(src.data().begin(), src.data().end(),
            dst.data().begin() + static_cast<std::ptrdiff_t>(offset));
}

Shape with_batch(std::size_t B, const Shape& s) {
  Shape out = s;
  out[0] = B;
  return out;
}

// Rows [b] of a [B,...] tensor.
Tensor<float> row(const Tensor<float>& t, std::size_t b) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  const std::size_t n = numel(s);
  Tensor<float> out(s);
  std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(b * n), n, out.data().begin());
  return out;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::size_t argmax_row(const Tensor<float>& t, std::size_t r, std::size_t n) {
  const auto row = t.data().subspan(r * n, n);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

Inference infer(const ParamMap<float>& params, const WwtConfig& cfg, const Tensor<float>& pixels,
                std::size_t batch_size) {
  if (pixels.rank() != 4) throw DimensionError("infer expects [B,H,W,3] pixels");
  const std::size_t B = pixels.dim(0), S = cfg.slots, C = cfg.num_classes;
  const bool has_cls = has_head(params, HeadKind::kClassify);
  const bool has_det = has_head(params, HeadKind::kDetect);
  Inference inf;
  inf.masks = Tensor<float>(Shape{B, cfg.heads, cfg.tokens(), S});
  inf.masks_mean = Tensor<float>(Shape{B, cfg.tokens(), S});
  inf.tokens = Tensor<float>(Shape{B, cfg.tokens(), cfg.dim});
  inf.slots = Tensor<float>(Shape{B, S, cfg.dim});
  if (has_cls) {
    inf.probs = Tensor<float>(Shape{B, C});
    inf.slot_probs = Tensor<float>(Shape{B, S, C});
  }
  if (has_det) {
    inf.boxes = Tensor<float>(Shape{B, S, 4});
    inf.det_probs = Tensor<float>(Shape{B, S, C + 1});
  }
  const std::size_t per_image = numel(pixels.shape()) / std::max<std::size_t>(B, 1);
  for (std::size_t start = 0; start < B; start += batch_size) {
    const std::size_t nb = std::min(batch_size, B - start);
    Tensor<float> chunk(with_batch(nb, pixels.shape()));
    std::copy_n(pixels.data().begin() + static_cast<std::ptrdiff_t>(start * per_image),
                nb * per_image, chunk.data().begin());
    ad::Tape<float> tape;
    ParamBinding<float> p(tape, params, [](const std::string&) { return false; });
    const Var<float> images = tape.constant(normalize_pixels(chunk, cfg));
    const ForwardResult<float> fwd = wwt_forward(p, cfg, images);
    const Var<float> A = reduce_heads(fwd.out.A);
    append(inf.masks, fwd.out.A.value(), start * cfg.heads * cfg.tokens() * S);
    append(inf.masks_mean, A.value(), start * cfg.tokens() * S);
    append(inf.tokens, fwd.out.x.value(), start * cfg.tokens() * cfg.dim);
    append(inf.slots, fwd.out.z.value(), start * S * cfg.dim);
    if (has_cls) {
      const SlotClassLogits<float> out = classify(p, cfg, fwd.out.z);
      append(inf.probs, ad::softmax_values(out.image_logits.value(), 1), start * C);
      append(inf.slot_probs, ad::softmax_values(out.slot_logits.value(), 2), start * S * C);
    }
    if (has_det) {
      const DetOutputs<float> det = detect(p, cfg, fwd.out.x, A, fwd.out.z);
      append(inf.boxes, det.boxes.value(), start * S * 4);
      append(inf.det_probs, ad::softmax_values(det.logits.value(), 2), start * S * (C + 1));
    }
  }
  return inf;
}

double accuracy(const ParamMap<float>& params, const WwtConfig& cfg,
                const std::vector<data::Scene>& scenes) {
  if (scenes.empty()) throw ValueError("accuracy on an empty split");
  const Inference inf = infer(params, cfg, data::stack_images(scenes, 0, scenes.size()));
  std::size_t hits = 0;
  for (std::size_t b = 0; b < scenes.size(); ++b) {
    hits += argmax_row(inf.probs, b, cfg.num_classes) == scenes[b].image_label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(scenes.size());
}

// ---------------------------------------------------------------------------

std::string to_string(EvalTask t) {
  switch (t) {
    case EvalTask::kClassify: return "classify";
    case EvalTask::kDiscover: return "discover";
    case EvalTask::kSegment: return "segment";
    case EvalTask::kDetect: return "detect";
    case EvalTask::kOcl: return "ocl";
    case EvalTask::kExplain: return "explain";
  }
  return "?";
}

EvalTask parse_eval_task(const std::string& s) {
  for (EvalTask t : {EvalTask::kClassify, EvalTask::kDiscover, EvalTask::kSegment,
                     EvalTask::kDetect, EvalTask::kOcl, EvalTask::kExplain}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown evaluation task '" + s + "'");
}

std::vector<DiscoveryResult> discover(const Inference& inf, const WwtConfig& cfg,
                                      const DiscoveryOptions& opts) {
  std::vector<DiscoveryResult> out;
  for (std::size_t b = 0; b < inf.masks.dim(0); ++b) {
    DiscoveryResult r;
    r.proposals = discover_regions(row(inf.masks, b), cfg.grid(), cfg.patch_size, opts);
    if (!r.proposals.empty()) r.selected = select_single_object(r.proposals).box;
    out.push_back(std::move(r));
  }
  return out;
}

void write_discovery_interchange(const std::string& stem, const std::vector<DiscoveryResult>& res,
                                 const std::vector<data::Scene>& scenes, std::size_t patch_size) {
  const fs::path mask_dir = stem + ".masks";
  fs::create_directories(mask_dir);
  std::ostringstream props, sel, gt;
  for (auto* os : {&props, &sel, &gt}) os->precision(17);
  for (std::size_t i = 0; i < res.size(); ++i) {
    const std::size_t id = scenes[i].index;
    for (std::size_t k = 0; k < res[i].proposals.size(); ++k) {
      const RegionProposal& p = res[i].proposals[k];
      const std::string name = std::to_string(id) + "_" + std::to_string(k) + ".pgm";
      data::write_file((mask_dir / name).string(), data::encode_pgm(p.mask.upscaled(patch_size)));
      props << id << " " << p.box.x0 << " " << p.box.y0 << " " << p.box.x1 << " " << p.box.y1
            << " " << p.concentration << " -1 " << (mask_dir.filename() / name).string() << "\n";
    }
    if (res[i].selected) {
      const Box& b = *res[i].selected;
      sel << id << " " << b.x0 << " " << b.y0 << " " << b.x1 << " " << b.y1 << " 1 -1\n";
    }
    for (const data::Instance& inst : scenes[i].instances) {
      gt << id << " " << inst.box.x0 << " " << inst.box.y0 << " " << inst.box.x1 << " "
         << inst.box.y1 << " 1 " << inst.cls << "\n";
    }
  }
  data::write_file(stem + ".proposals.txt", props.str());
  data::write_file(stem + ".selected.txt", sel.str());
  data::write_file(stem + ".gt.txt", gt.str());
}

metrics::EvalReport evaluate(EvalTask task, const ParamMap<float>& params, const WwtConfig& cfg,
                             const std::vector<data::Scene>& scenes, const EvalOptions& opts) {
  if (scenes.empty()) throw ValueError("evaluation split is empty");
  const bool needs_cls = task == EvalTask::kClassify || task == EvalTask::kSegment ||
                         task == EvalTask::kExplain;
  if (needs_cls && !has_head(params, HeadKind::kClassify)) {
    throw ConfigError("checkpoint has no classification head");
  }
  if (task == EvalTask::kDetect && !has_head(params, HeadKind::kDetect)) {
    throw ConfigError("checkpoint has no detection head");
  }
  const Tensor<float> pixels = data::stack_images(scenes, 0, scenes.size());
  const Inference inf = infer(params, cfg, pixels);
  const std::size_t B = scenes.size(), S = cfg.slots, C = cfg.num_classes, T = cfg.tokens();
  const std::size_t N = cfg.image_size;
  metrics::EvalReport rep(to_string(task));
  rep.set_count(B);

  std::vector<std::vector<Box>> gts;
  for (const data::Scene& s : scenes) gts.push_back(data::gt_boxes(s));

  switch (task) {
    case EvalTask::kClassify: {
      std::vector<std::size_t> hits(C, 0), totals(C, 0);
      for (std::size_t b = 0; b < B; ++b) {
        ++totals[scenes[b].image_label];
        if (argmax_row(inf.probs, b, C) == scenes[b].image_label) ++hits[scenes[b].image_label];
      }
      const double acc = static_cast<double>(std::accumulate(hits.begin(), hits.end(), std::size_t{0})) /
                         static_cast<double>(B);
      rep.set("top1", acc);
      for (std::size_t c = 0; c < C; ++c) {
        if (totals[c]) rep.set_class(std::to_string(c), static_cast<double>(hits[c]) / static_cast<double>(totals[c]));
      }
      break;
    }
    case EvalTask::kDiscover: {
      const std::vector<DiscoveryResult> res = discover(inf, cfg, opts.discovery);
      std::vector<std::optional<Box>> selected;
      std::vector<std::vector<Box>> all;
      std::vector<std::vector<Mask>> masks;
      std::vector<std::vector<metrics::GtInstance>> inst;
      for (std::size_t b = 0; b < B; ++b) {
        selected.push_back(res[b].selected);
        all.emplace_back();
        masks.emplace_back();
        for (const RegionProposal& p : res[b].proposals) {
          all.back().push_back(p.box);
          masks.back().push_back(p.mask.upscaled(cfg.patch_size));
        }
        inst.push_back(data::gt_instances(scenes[b]));
      }
      const metrics::CorLocResult cl = metrics::corloc(selected, gts);
      const metrics::RecallResult rc = metrics::recall_at_iou(all, gts);
      rep.set("corloc", cl.value);
      rep.set("recall", rc.recall);
      rep.set("mean_predictions", rc.mean_predictions, 0, 1e9);
      rep.set("mbo_i", metrics::mbo(masks, inst, metrics::MboMode::kInstance));
      rep.set("mbo_c", metrics::mbo(masks, inst, metrics::MboMode::kClass));
      rep.set("random_box_corloc",
              metrics::random_box_corloc(gts, static_cast<double>(N), static_cast<double>(N),
                                         opts.random_box_samples, 0));
      rep.note("skipped_without_gt", std::to_string(cl.skipped));
      rep.note("tau", std::to_string(opts.discovery.tau));
      if (!opts.out_stem.empty()) write_discovery_interchange(opts.out_stem, res, scenes, cfg.patch_size);
      break;
    }
    case EvalTask::kSegment: {
      metrics::MiouAccumulator acc(C + 1);
      for (std::size_t b = 0; b < B; ++b) {
        const Segmentation seg = segment(row(inf.masks_mean, b), row(inf.slot_probs, b), cfg.grid(),
                                         cfg.patch_size, opts.bg_threshold);
        acc.add({seg.width, seg.height, seg.labels}, data::label_map(scenes[b]));
      }
      rep.set("miou", acc.value());
      const auto per = acc.per_class();
      for (std::size_t c = 0; c <= C; ++c) {
        if (per[c]) rep.set_class(c == C ? "background" : std::to_string(c), *per[c]);
      }
      break;
    }
    case EvalTask::kDetect: {
      std::vector<std::vector<Box>> preds;
      std::vector<std::optional<Box>> best;
      for (std::size_t b = 0; b < B; ++b) {
        preds.emplace_back();
        double best_score = -1;
        std::optional<Box> top;
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t k = argmax_row(inf.det_probs, b * S + s, C + 1);
          const float* bx = inf.boxes.ptr() + (b * S + s) * 4;
          const Box box = box_from_cxcywh(bx[0], bx[1], bx[2], bx[3], static_cast<double>(N));
          const double fg = 1.0 - inf.det_probs[(b * S + s) * (C + 1) + C];
          if (k != C) preds.back().push_back(box);
          if (fg > best_score) {
            best_score = fg;
            top = box;
          }
        }
        best.push_back(top);
      }
      const metrics::RecallResult rc = metrics::recall_at_iou(preds, gts);
      rep.set("recall", rc.recall);
      rep.set("mean_predictions", rc.mean_predictions, 0, 1e9);
      rep.set("corloc", metrics::corloc(best, gts).value);
      break;
    }
    case EvalTask::kOcl: {
      std::vector<std::vector<Mask>> masks;
      std::vector<std::vector<metrics::GtInstance>> inst;
      for (std::size_t b = 0; b < B; ++b) {
        std::vector<Mask> slot_masks(S, Mask(cfg.grid(), cfg.grid()));
        for (std::size_t t = 0; t < T; ++t) slot_masks[argmax_row(inf.masks_mean, b * T + t, S)].data[t] = 1;
        masks.emplace_back();
        for (const Mask& m : slot_masks) masks.back().push_back(m.upscaled(cfg.patch_size));
        inst.push_back(data::gt_instances(scenes[b]));
      }
      rep.set("mbo_i", metrics::mbo(masks, inst, metrics::MboMode::kInstance));
      rep.set("mbo_c", metrics::mbo(masks, inst, metrics::MboMode::kClass));
      break;
    }
    case EvalTask::kExplain: {
      Tensor<float> maps(Shape{B, cfg.grid(), cfg.grid()});
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t c = argmax_row(inf.probs, b, C);
        const Tensor<float> ca = minmax_normalize(
            class_activation(row(inf.slot_probs, b), row(inf.masks_mean, b), c, cfg.grid()));
        append(maps, ca, b * T);
      }
      const metrics::DropIncrease di = metrics::drop_increase(
          [&](const Tensor<float>& imgs) { return infer(params, cfg, imgs).probs; }, pixels, maps);
      rep.set("drop", di.drop, 0, 100);
      rep.set("increase", di.increase, 0, 100);
      rep.note("units", "percent");
      break;
    }
  }
  if (!opts.out_stem.empty()) rep.write(opts.out_stem);
  return rep;
}

// ---------------------------------------------------------------------------

std::string ProbeReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "# similarity: cosine to position 0\n";
  os << "position  dx  dy  slot  slot_sim  token_sim\n";
  for (const ProbeRow& r : rows) {
    os << r.position << "  " << r.dx << "  " << r.dy << "  " << r.slot << "  " << r.slot_similarity
       << "  " << r.token_similarity << "\n";
  }
  os << "mean(pos1..) slot=" << mean_slot << " token=" << mean_token << "\n";
  return os.str();
}

std::string ProbeReport::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "position,dx,dy,slot,slot_similarity,token_similarity\n";
  for (const ProbeRow& r : rows) {
    os << r.position << "," << r.dx << "," << r.dy << "," << r.slot << "," << r.slot_similarity
       << "," << r.token_similarity << "\n";
  }
  return os.str();
}

ProbeReport probe_invariance(const ParamMap<float>& params, const WwtConfig& cfg,
                             const data::ProbeStimuli& stimuli) {
  const std::size_t n = stimuli.images.size(), G = cfg.grid(), P = cfg.patch_size;
  const std::size_t S = cfg.slots, d = cfg.dim;
  if (n < 2) throw ValueError("probe needs at least two positions");
  std::vector<const Tensor<float>*> imgs;
  Tensor<float> pixels(Shape{n, cfg.image_size, cfg.image_size, 3});
  for (std::size_t k = 0; k < n; ++k) append(pixels, stimuli.images[k], k * stimuli.images[k].size());
  const Inference inf = infer(params, cfg, pixels);

  ProbeReport rep;
  std::vector<float> token0, slot0;
  std::size_t covered0 = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto [dx, dy] = stimuli.offsets[k];
    if (dx % static_cast<long>(P) != 0 || dy % static_cast<long>(P) != 0) {
      throw ValueError("probe positions must be patch-aligned");
    }
    const Box bb = stimuli.masks[k].bounds();
    if (bb.width() < static_cast<double>(P) || bb.height() < static_cast<double>(P)) {
      throw ValueError("probe sprite is smaller than one patch");
    }
    std::vector<std::size_t> covered;
    for (std::size_t t = 0; t < G * G; ++t) {
      bool any = false;
      for (std::size_t y = 0; y < P && !any; ++y)
        for (std::size_t x = 0; x < P && !any; ++x)
          any = stimuli.masks[k].at((t % G) * P + x, (t / G) * P + y) != 0;
      if (any) covered.push_back(t);
    }
    std::vector<float> tokens;
    for (std::size_t t : covered) {
      const float* r = inf.tokens.ptr() + (k * G * G + t) * d;
      tokens.insert(tokens.end(), r, r + d);
    }
    const Tensor<float> w = ad::softmax_values(row(inf.masks_mean, k), 1);
    std::vector<double> energy(S, 0.0);
    for (std::size_t t : covered)
      for (std::size_t s = 0; s < S; ++s) energy[s] += w[t * S + s];
    const auto slot = static_cast<std::size_t>(std::max_element(energy.begin(), energy.end()) - energy.begin());
    const float* sv = inf.slots.ptr() + (k * S + slot) * d;
    std::vector<float> slotvec(sv, sv + d);
    if (k == 0) {
      token0 = tokens;
      slot0 = slotvec;
      covered0 = covered.size();
    } else if (covered.size() != covered0) {
      throw ValueError("sprite covers a different number of patches at position " + std::to_string(k));
    }
    ProbeRow r;
    r.position = k;
    r.dx = dx;
    r.dy = dy;
    r.slot = slot;
    r.slot_similarity = cosine(slotvec, slot0);
    r.token_similarity = cosine(tokens, token0);
    rep.rows.push_back(r);
  }
  for (std::size_t k = 1; k < n; ++k) {
    rep.mean_slot += rep.rows[k].slot_similarity / static_cast<double>(n - 1);
    rep.mean_token += rep.rows[k].token_similarity / static_cast<double>(n - 1);
  }
  return rep;
}

ProbeReport probe_invariance(const ParamMap<float>& params, const WwtConfig& cfg,
                             std::size_t cls, const std::vector<std::pair<long, long>>& offsets,
                             double sprite_size) {
  return probe_invariance(params, cfg,
                          data::probe_stimuli(cls, offsets, cfg.image_size, sprite_size,
                                              {static_cast<long>(cfg.patch_size),
                                               static_cast<long>(3 * cfg.patch_size)},
                                              cfg.num_classes));
}

// ---------------------------------------------------------------------------

Tensor<float> blend(const Tensor<float>& image, const Tensor<float>& heat,
                    const std::array<float, 3>& color, float alpha) {
  if (image.rank() != 3 || heat.rank() != 2 || heat.dim(0) != image.dim(0) || heat.dim(1) != image.dim(1)) {
    throw DimensionError("blend: image " + wwt::to_string(image.shape()) + ", heat " + wwt::to_string(heat.shape()));
  }
  Tensor<float> out(image.shape());
  for (std::size_t i = 0; i < heat.size(); ++i) {
    const float a = alpha * std::clamp(heat[i], 0.0f, 1.0f);
    for (std::size_t c = 0; c < 3; ++c) {
      out[i * 3 + c] = image[i * 3 + c] + a * (color[c] - image[i * 3 + c]);
    }
  }
  return out;
}

namespace {

Tensor<float> grid_to_pixels(const Tensor<float>& g, std::size_t grid, std::size_t P) {
  Tensor<float> out(Shape{grid * P, grid * P});
  for (std::size_t y = 0; y < grid * P; ++y)
    for (std::size_t x = 0; x < grid * P; ++x) out[y * grid * P + x] = g[(y / P) * grid + x / P];
  return out;
}

void draw_box(Tensor<float>& img, const Box& b, const std::array<float, 3>& color) {
  const auto H = static_cast<long>(img.dim(0)), W = static_cast<long>(img.dim(1));
  const long x0 = std::clamp(static_cast<long>(std::floor(b.x0)), 0L, W - 1);
  const long y0 = std::clamp(static_cast<long>(std::floor(b.y0)), 0L, H - 1);
  const long x1 = std::clamp(static_cast<long>(std::ceil(b.x1)) - 1, 0L, W - 1);
  const long y1 = std::clamp(static_cast<long>(std::ceil(b.y1)) - 1, 0L, H - 1);
  auto put = [&](long x, long y) {
    for (std::size_t c = 0; c < 3; ++c) img[(static_cast<std::size_t>(y * W + x)) * 3 + c] = color[c];
  };
  for (long x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (long y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

}  // namespace

std::vector<std::string> export_overlays(const ParamMap<float>& params, const WwtConfig& cfg,
                                         const std::vector<data::Scene>& scenes,
                                         const std::string& out_dir, const DiscoveryOptions& opts) {
  fs::create_directories(out_dir);
  const Inference inf = infer(params, cfg, data::stack_images(scenes, 0, scenes.size()));
  const std::vector<DiscoveryResult> disc = discover(inf, cfg, opts);
  const std::size_t S = cfg.slots, G = cfg.grid(), P = cfg.patch_size, C = cfg.num_classes;
  const bool has_cls = has_head(params, HeadKind::kClassify);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const Tensor<float>& img) {
    const std::string path = (fs::path(out_dir) / name).string();
    data::write_file(path, data::encode_ppm(img));
    written.push_back(path);
  };
  for (std::size_t b = 0; b < scenes.size(); ++b) {
    std::ostringstream stem;
    stem << "img" << std::setw(4) << std::setfill('0') << b;
    const Tensor<float>& image = scenes[b].image;
    const Tensor<float> mask = row(inf.masks_mean, b);
    for (std::size_t s = 0; s < S; ++s) {
      Tensor<float> col(Shape{G, G});
      for (std::size_t t = 0; t < G * G; ++t) col[t] = mask[t * S + s];
      emit(stem.str() + "_slot" + std::to_string(s) + ".ppm",
           blend(image, grid_to_pixels(minmax_normalize(col), G, P), {1.0f, 0.0f, 0.0f}));
    }
    Tensor<float> ca(Shape{G, G});
    Tensor<float> seg_img = image;
    if (has_cls) {
      const Tensor<float> probs = row(inf.slot_probs, b);
      ca = minmax_normalize(class_activation(probs, mask, argmax_row(inf.probs, b, C), G));
      const Segmentation seg = segment(mask, probs, G, P, 0.25);
      for (std::size_t i = 0; i < seg.labels.size(); ++i) {
        if (seg.labels[i] == C) continue;
        const auto color = data::class_color(seg.labels[i], C);
        for (std::size_t c = 0; c < 3; ++c) {
          seg_img[i * 3 + c] += kOverlayAlpha * (color[c] - seg_img[i * 3 + c]);
        }
      }
    }
    emit(stem.str() + "_ca.ppm", blend(image, grid_to_pixels(ca, G, P), {1.0f, 1.0f, 0.0f}));
    emit(stem.str() + "_seg.ppm", seg_img);
    Tensor<float> boxes = image;
    for (const RegionProposal& p : disc[b].proposals) draw_box(boxes, p.box, {0.0f, 1.0f, 0.0f});
    if (disc[b].selected) draw_box(boxes, *disc[b].selected, {1.0f, 1.0f, 1.0f});
    emit(stem.str() + "_boxes.ppm", boxes);
  }
  return written;
}

std::string flops_report(const WwtConfig& cfg) {
  const FlopReport r = count_flops(cfg);
  std::ostringstream os;
  os << "# multiply-accumulates per image\n";
  os << "config: T=" << cfg.tokens() << " d=" << cfg.dim << " S=" << cfg.slots << " m=" << cfg.heads
     << " L=" << cfg.blocks << " h_t=" << cfg.mlp_hidden_t << " h_s=" << cfg.mlp_hidden_s
     << " h_a=" << cfg.mlp_hidden_a << "\n";
  auto line = [&](const char* name, std::uint64_t v) {
    os << std::left << std::setw(16) << name << std::right << std::setw(14) << v << "\n";
  };
  line("patch_embed", r.patch_embed);
  line("projections", r.block.projections);
  line("logits", r.block.logits);
  line("values", r.block.values);
  line("mlp_t", r.block.mlp_t);
  line("mlp_s", r.block.mlp_s);
  line("mlp_a", r.block.mlp_a);
  line("block", r.block.total());
  line("vit_block", r.vit_block);
  line("total", r.total);
  line("vit_total", r.vit_total);
  os << std::fixed << std::setprecision(4) << "block_ratio     "
     << static_cast<double>(r.block.total()) / static_cast<double>(r.vit_block) << "\n"
     << "total_ratio     " << r.ratio() << "\n";
  return os.str();
}

}  // namespace wwt::train
