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

#include "wwt/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wwt/layers.hpp"

namespace wwt {

using ad::Var;

namespace {

const char* head_prefix(HeadKind head) {
  switch (head) {
    case HeadKind::kClassify: return "cls.";
    case HeadKind::kAutoencode: return "ae.";
    case HeadKind::kDistill: return "distill.";
    case HeadKind::kDetect: return "det.";
    case HeadKind::kTeacher: return "teacher.";
  }
  return "";
}

template <typename T>
Var<T> constant_like(ad::Tape<T>& tape, const Tensor<float>& v) {
  return tape.constant(v.template cast<T>());
}

}  // namespace

void add_head_params(ParamMap<float>& params, const WwtConfig& cfg, HeadKind head,
                     std::uint64_t seed) {
  const std::size_t d = cfg.dim;
  switch (head) {
    case HeadKind::kClassify:
      layers::add_norm(params, "cls.norm", d);
      layers::add_mlp(params, "cls", d, cfg.head_hidden, cfg.num_classes, seed);
      return;
    case HeadKind::kAutoencode:
      layers::add_mlp(params, "ae", d, cfg.decoder_hidden, 3, seed);
      return;
    case HeadKind::kDistill:
      layers::add_mlp(params, "distill", d, cfg.decoder_hidden, cfg.teacher_dim, seed);
      return;
    case HeadKind::kDetect:
      layers::add_norm(params, "det.norm", d);
      layers::add_mlp(params, "det.box", d + 2, cfg.det_hidden, 4, seed);
      layers::add_mlp(params, "det.cls", d, cfg.det_hidden, cfg.num_classes + 1, seed);
      return;
    case HeadKind::kTeacher:
      layers::add_linear(params, "teacher.fc1", cfg.patch_dim(), 64, seed,
                         1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
      layers::add_linear(params, "teacher.fc2", 64, cfg.teacher_dim, seed, 1.0 / 8.0);
      return;
  }
}

bool has_head(const ParamMap<float>& params, HeadKind head) {
  const std::string prefix = head_prefix(head);
  auto it = params.lower_bound(prefix);
  return it != params.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

// ---------------------------------------------------------------------------

template <typename T>
SlotClassLogits<T> classify(const ParamBinding<T>& p, const WwtConfig& cfg, const Var<T>& z) {
  SlotClassLogits<T> out;
  out.slot_logits = layers::mlp(p, "cls", layers::norm(p, "cls.norm", z, cfg.ln_eps));
  out.image_logits = ad::mean_axis(out.slot_logits, 1);
  return out;
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& targets,
                     double smoothing) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("cross_entropy expects [N,C] logits and N targets");
  }
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  Tensor<T> q(Shape{N, C}, static_cast<T>(smoothing / static_cast<double>(C)));
  for (std::size_t n = 0; n < N; ++n) {
    if (targets[n] >= C) throw ValueError("class target out of range");
    q[n * C + targets[n]] += static_cast<T>(1.0 - smoothing);
  }
  const Var<T> logp = ad::log_softmax_along(logits, 1);
  return ad::scale(ad::sum(ad::mul(logp, logits.tape().constant(std::move(q)))),
                   -1.0 / static_cast<double>(N));
}

Tensor<float> class_activation(const Tensor<float>& slot_probs, const Tensor<float>& mask,
                               std::size_t p, std::size_t grid) {
  if (slot_probs.rank() != 2 || mask.rank() != 2 || mask.dim(1) != slot_probs.dim(0) ||
      mask.dim(0) != grid * grid) {
    throw DimensionError("class_activation: probs " + to_string(slot_probs.shape()) +
                         ", mask " + to_string(mask.shape()));
  }
  const std::size_t S = slot_probs.dim(0), C = slot_probs.dim(1);
  if (p >= C) throw ValueError("class index " + std::to_string(p) + " out of range");
  Tensor<float> ca(Shape{grid, grid});
  for (std::size_t t = 0; t < grid * grid; ++t) {
    float acc = 0;
    for (std::size_t s = 0; s < S; ++s) {
      acc += slot_probs[s * C + p] * std::max(0.0f, mask[t * S + s]);
    }
    ca[t] = acc / static_cast<float>(S);
  }
  return ca;
}

Tensor<float> minmax_normalize(const Tensor<float>& map) {
  Tensor<float> out(map.shape());
  if (map.size() == 0) return out;
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const float range = *hi - *lo;
  if (!(range > 0.0f)) return out;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] - *lo) / range;
  return out;
}

// ---------------------------------------------------------------------------

Tensor<float> upsample_bilinear(const Tensor<float>& map, std::size_t r) {
  if (map.rank() != 3) throw DimensionError("upsample_bilinear expects [H,W,K]");
  if (r == 0) throw ValueError("upsample factor must be >= 1");
  const std::size_t H = map.dim(0), W = map.dim(1), K = map.dim(2);
  Tensor<float> out(Shape{H * r, W * r, K});
  auto coord = [r](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(r) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    f = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < H * r; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, H, y0, y1, fy);
    for (std::size_t x = 0; x < W * r; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(x, W, x0, x1, fx);
      for (std::size_t k = 0; k < K; ++k) {
        const double v = (1 - fy) * ((1 - fx) * map[(y0 * W + x0) * K + k] +
                                     fx * map[(y0 * W + x1) * K + k]) +
                         fy * ((1 - fx) * map[(y1 * W + x0) * K + k] +
                               fx * map[(y1 * W + x1) * K + k]);
        out[(y * W * r + x) * K + k] = static_cast<float>(v);
      }
    }
  }
  return out;
}

Segmentation segment(const Tensor<float>& mask, const Tensor<float>& slot_probs,
                     std::size_t grid, std::size_t r, double bg_threshold) {
  if (mask.rank() != 2 || mask.dim(0) != grid * grid || slot_probs.rank() != 2 ||
      slot_probs.dim(0) != mask.dim(1)) {
    throw DimensionError("segment: mask " + to_string(mask.shape()) + ", probs " +
                         to_string(slot_probs.shape()));
  }
  if (r == 0) throw ValueError("upsample factor must be >= 1");
  const std::size_t S = mask.dim(1), C = slot_probs.dim(1);
  const Tensor<float> weights =
      upsample_bilinear(ad::softmax_values(mask, 1).reshaped(Shape{grid, grid, S}), r);
  Segmentation seg;
  seg.width = seg.height = grid * r;
  const std::size_t npix = seg.width * seg.height;
  seg.scores = Tensor<float>(Shape{C, seg.height, seg.width});
  seg.labels.assign(npix, C);
  for (std::size_t i = 0; i < npix; ++i) {
    std::size_t best = 0;
    float best_score = -1.0f;
    for (std::size_t c = 0; c < C; ++c) {
      float acc = 0;
      for (std::size_t s = 0; s < S; ++s) acc += weights[i * S + s] * slot_probs[s * C + c];
      seg.scores[c * npix + i] = acc;
      if (acc > best_score) {
        best_score = acc;
        best = c;
      }
    }
    seg.labels[i] = best_score >= bg_threshold ? best : C;
  }
  return seg;
}

// ---------------------------------------------------------------------------

std::vector<Mask> connected_components(const Mask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw ValueError("connectivity must be 4 or 8");
  const std::size_t W = mask.width, H = mask.height;
  std::vector<int> label(W * H, -1);
  std::vector<Mask> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < W * H; ++start) {
    if (!mask.data[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(out.size());
    Mask comp(W, H);
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      comp.data[cur] = 1;
      const auto cx = static_cast<long>(cur % W), cy = static_cast<long>(cur / W);
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (connectivity == 4 && dx != 0 && dy != 0) continue;
          const long nx = cx + dx, ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(W) || ny >= static_cast<long>(H)) continue;
          const auto n = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
          if (mask.data[n] && label[n] < 0) {
            label[n] = id;
            stack.push_back(n);
          }
        }
      }
    }
    out.push_back(std::move(comp));
  }
  return out;
}

double herfindahl(const std::vector<double>& weights) {
  double total = 0;
  for (double w : weights) total += std::max(0.0, w);
  if (!(total > 0.0)) {
    // No mass: treat as uniform.
    return weights.empty() ? 0.0 : 1.0 / static_cast<double>(weights.size());
  }
  double h = 0;
  for (double w : weights) {
    const double q = std::max(0.0, w) / total;
    h += q * q;
  }
  return h;
}

std::vector<RegionProposal> discover_regions(const Tensor<float>& A, std::size_t grid,
                                             std::size_t patch_size,
                                             const DiscoveryOptions& opts) {
  if (A.rank() != 3 || A.dim(1) != grid * grid) {
    throw DimensionError("discover_regions expects [m,T,S], got " + to_string(A.shape()));
  }
  if (!(opts.dedup_iou > 0.0 && opts.dedup_iou <= 1.0)) {
    throw ValueError("dedup_iou must be in (0,1]");
  }
  const std::size_t m = A.dim(0), T = A.dim(1), S = A.dim(2);
  std::vector<RegionProposal> candidates;
  std::vector<double> norm(T);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t h = 0; h < m; ++h) {
      float lo = std::numeric_limits<float>::infinity(), hi = -lo;
      for (std::size_t t = 0; t < T; ++t) {
        lo = std::min(lo, A[(h * T + t) * S + s]);
        hi = std::max(hi, A[(h * T + t) * S + s]);
      }
      if (!(hi > lo)) continue;
      Mask bin(grid, grid);
      for (std::size_t t = 0; t < T; ++t) {
        norm[t] = (static_cast<double>(A[(h * T + t) * S + s]) - lo) / (static_cast<double>(hi) - lo);
        bin.data[t] = norm[t] >= opts.tau ? 1 : 0;
      }
      for (Mask& comp : connected_components(bin, opts.connectivity)) {
        if (comp.area() < opts.min_area) continue;
        std::vector<double> w;
        for (std::size_t t = 0; t < T; ++t) {
          if (comp.data[t]) w.push_back(A[(h * T + t) * S + s]);
        }
        RegionProposal rp;
        rp.box = comp.bounds(static_cast<double>(patch_size));
        rp.mask = std::move(comp);
        rp.slot = s;
        rp.head = h;
        rp.concentration = herfindahl(w);
        candidates.push_back(std::move(rp));
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const RegionProposal& a, const RegionProposal& b) {
                     return a.mask.area() > b.mask.area();
                   });
  std::vector<RegionProposal> kept;
  for (RegionProposal& c : candidates) {
    bool dup = false;
    for (const RegionProposal& k : kept) {
      if (iou(c.mask, k.mask) >= opts.dedup_iou) {
        dup = true;
        break;
      }
    }
    if (!dup) kept.push_back(std::move(c));
  }
  return kept;
}

const RegionProposal& select_single_object(const std::vector<RegionProposal>& proposals) {
  if (proposals.empty()) throw ValueError("select_single_object on an empty proposal list");
  const RegionProposal* best = &proposals.front();
  for (const RegionProposal& p : proposals) {
    const auto key = [](const RegionProposal& r) {
      return std::make_tuple(r.concentration, r.mask.area(), -static_cast<long>(r.slot),
                             -static_cast<long>(r.head));
    };
    if (key(p) > key(*best)) best = &p;
  }
  return *best;
}

// ---------------------------------------------------------------------------

Tensor<float> token_coords(std::size_t grid) {
  Tensor<float> c(Shape{grid * grid, 2});
  for (std::size_t t = 0; t < grid * grid; ++t) {
    c[2 * t] = (static_cast<float>(t % grid) + 0.5f) / static_cast<float>(grid);
    c[2 * t + 1] = (static_cast<float>(t / grid) + 0.5f) / static_cast<float>(grid);
  }
  return c;
}

template <typename T>
DetOutputs<T> detect(const ParamBinding<T>& p, const WwtConfig& cfg, const Var<T>& x,
                     const Var<T>& A, const Var<T>& z, double eps) {
  ad::Tape<T>& tape = p.tape();
  const std::size_t B = x.dim(0);
  const Var<T> coords = ad::expand_front(constant_like(tape, token_coords(cfg.grid())), B);
  const Var<T> feats = ad::concat<T>({x, coords}, 2);
  const Var<T> pos = ad::relu(A);
  const Var<T> w = ad::div(pos, ad::add_scalar(ad::sum_axis(pos, 1, true), eps));
  DetOutputs<T> out;
  out.pooled = ad::matmul_tn(w, feats);
  out.boxes = ad::sigmoid(layers::mlp(p, "det.box", out.pooled));
  out.logits = layers::mlp(p, "det.cls", layers::norm(p, "det.norm", z, cfg.ln_eps));
  return out;
}

Assignment hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  Assignment out;
  if (n == 0) return out;
  const std::size_t m = cost.front().size();
  for (const auto& row : cost) {
    if (row.size() != m) throw DimensionError("ragged cost matrix");
  }
  if (n > m) {
    throw ValueError("more ground-truth objects (" + std::to_string(n) + ") than slots (" +
                     std::to_string(m) + ")");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(m + 1, 0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.gt_to_slot.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] != 0) out.gt_to_slot[match[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) out.total_cost += cost[i][out.gt_to_slot[i]];
  return out;
}

std::vector<std::vector<double>> matching_cost(const Tensor<float>& boxes,
                                               const Tensor<float>& probs,
                                               const std::vector<GtObject>& gts,
                                               const DetectionWeights& w) {
  const std::size_t S = boxes.dim(0), K = probs.dim(1);
  std::vector<std::vector<double>> cost(gts.size(), std::vector<double>(S));
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& g = gts[i].box;
    const Box gb = box_from_cxcywh(g[0], g[1], g[2], g[3]);
    for (std::size_t s = 0; s < S; ++s) {
      double l1 = 0;
      for (std::size_t k = 0; k < 4; ++k) l1 += std::abs(boxes[s * 4 + k] - g[k]);
      const Box pb = box_from_cxcywh(boxes[s * 4], boxes[s * 4 + 1], boxes[s * 4 + 2],
                                     boxes[s * 4 + 3]);
      cost[i][s] = -w.cls * probs[s * K + gts[i].cls] + w.l1 * l1 + w.giou * (1.0 - giou(pb, gb));
    }
  }
  return cost;
}

Assignment match_bipartite(const Tensor<float>& boxes, const Tensor<float>& probs,
                           const std::vector<GtObject>& gts, const DetectionWeights& w) {
  if (gts.size() > boxes.dim(0)) {
    throw ValueError("more ground-truth objects than slots");
  }
  return hungarian(matching_cost(boxes, probs, gts, w));
}

template <typename T>
Var<T> giou_rows(const Var<T>& pred, const Var<T>& target) {
  auto col = [](const Var<T>& b, std::size_t k) { return ad::slice(b, 1, k, 1); };
  auto corners = [&](const Var<T>& b) {
    const Var<T> hw = ad::scale(col(b, 2), 0.5), hh = ad::scale(col(b, 3), 0.5);
    return std::array<Var<T>, 4>{ad::sub(col(b, 0), hw), ad::sub(col(b, 1), hh),
                                 ad::add(col(b, 0), hw), ad::add(col(b, 1), hh)};
  };
  const auto p = corners(pred), g = corners(target);
  const Var<T> iw = ad::relu(ad::sub(ad::minimum(p[2], g[2]), ad::maximum(p[0], g[0])));
  const Var<T> ih = ad::relu(ad::sub(ad::minimum(p[3], g[3]), ad::maximum(p[1], g[1])));
  const Var<T> inter = ad::mul(iw, ih);
  const Var<T> area_p = ad::mul(ad::sub(p[2], p[0]), ad::sub(p[3], p[1]));
  const Var<T> area_g = ad::mul(ad::sub(g[2], g[0]), ad::sub(g[3], g[1]));
  const Var<T> uni = ad::sub(ad::add(area_p, area_g), inter);
  const Var<T> cw = ad::sub(ad::maximum(p[2], g[2]), ad::minimum(p[0], g[0]));
  const Var<T> ch = ad::sub(ad::maximum(p[3], g[3]), ad::minimum(p[1], g[1]));
  const Var<T> hull = ad::mul(cw, ch);
  const Var<T> out = ad::sub(ad::div(inter, uni), ad::div(ad::sub(hull, uni), hull));
  return ad::reshape(out, Shape{pred.dim(0)});
}

template <typename T>
DetectionLoss<T> detection_loss(const Var<T>& boxes, const Var<T>& logits,
                                const std::vector<GtObject>& gts, const Assignment& assignment,
                                const DetectionWeights& w) {
  ad::Tape<T>& tape = boxes.tape();
  const std::size_t S = logits.dim(0), K = logits.dim(1), n = gts.size();
  if (assignment.gt_to_slot.size() != n) throw ValueError("assignment does not cover all objects");
  Tensor<T> weights(Shape{S, K});
  std::vector<bool> matched(S, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = assignment.gt_to_slot[i];
    if (s >= S || matched[s]) throw ValueError("assignment is not injective");
    matched[s] = true;
    weights[s * K + gts[i].cls] = static_cast<T>(w.cls);
  }
  for (std::size_t s = 0; s < S; ++s) {
    if (!matched[s]) weights[s * K + K - 1] = static_cast<T>(w.cls * w.bg);
  }
  DetectionLoss<T> out;
  Var<T> cls = ad::scale(
      ad::sum(ad::mul(ad::log_softmax_along(logits, 1), tape.constant(std::move(weights)))),
      -1.0 / static_cast<double>(S));
  out.cls = static_cast<double>(cls.value().item());
  out.total = cls;
  if (n == 0) return out;
  Tensor<T> sel(Shape{n, S}), gt(Shape{n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    sel[i * S + assignment.gt_to_slot[i]] = T{1};
    for (std::size_t k = 0; k < 4; ++k) gt[i * 4 + k] = static_cast<T>(gts[i].box[k]);
  }
  const Var<T> picked = ad::matmul(tape.constant(std::move(sel)), boxes);
  const Var<T> target = tape.constant(std::move(gt));
  const double inv_n = 1.0 / static_cast<double>(n);
  const Var<T> l1 = ad::scale(ad::sum(ad::abs(ad::sub(picked, target))), inv_n);
  const Var<T> g = ad::scale(ad::add_scalar(ad::scale(ad::sum(giou_rows(picked, target)), -1.0),
                                            static_cast<double>(n)),
                             inv_n);
  out.l1 = static_cast<double>(l1.value().item());
  out.giou = static_cast<double>(g.value().item());
  out.total = ad::add(ad::add(cls, ad::scale(l1, w.l1)), ad::scale(g, w.giou));
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> autoencode_prediction(const ParamBinding<T>& p, const WwtConfig&, const Var<T>& A,
                             const Var<T>& z, bool distill, std::size_t keep) {
  Var<T> a = A, zz = z;
  const std::size_t S = A.dim(2);
  if (keep > S) throw ValueError("cannot keep more slots than exist");
  if (keep > 0 && keep < S) {
    a = ad::slice(A, 2, 0, keep);
    zz = ad::slice(z, 1, 0, keep);
  }
  const Var<T> f = reconstruct_dense(ad::softmax_along(a, 2), zz);
  return layers::mlp(p, distill ? "distill" : "ae", f);
}

template <typename T>
Var<T> reconstruction_mse(const Var<T>& prediction, const Var<T>& target, std::size_t grid) {
  const std::size_t B = prediction.dim(0), c = prediction.dim(2);
  const Shape& ts = target.shape();
  if (ts.size() != 4 || ts[0] != B || ts[3] != c || ts[1] != ts[2] || ts[1] % grid != 0) {
    throw DimensionError("reconstruction target " + to_string(ts) +
                         " does not match decoder output " + to_string(prediction.shape()));
  }
  Var<T> pred = ad::reshape(prediction, Shape{B, grid, grid, c});
  const std::size_t f = ts[1] / grid;
  if (f > 1) pred = ad::upsample_nearest2d(pred, f);
  return ad::mean(ad::square(ad::sub(pred, target)));
}

template <typename T>
Var<T> autoencode_loss(const ParamBinding<T>& p, const WwtConfig& cfg, const Var<T>& A,
                       const Var<T>& z, const Var<T>& target, bool distill, std::size_t keep) {
  return reconstruction_mse(autoencode_prediction(p, cfg, A, z, distill, keep), target,
                            cfg.grid());
}

Tensor<float> teacher_features(const ParamMap<float>& params, const WwtConfig& cfg,
                               const Tensor<float>& images) {
  ad::Tape<float> tape;
  ParamBinding<float> p(tape, params, [](const std::string&) { return false; });
  const Var<float> feats = layers::mlp(p, "teacher", patchify(tape.constant(images), cfg));
  const std::size_t B = images.dim(0), G = cfg.grid();
  return feats.value().reshaped(Shape{B, G, G, cfg.teacher_dim});
}

#define WWT_INSTANTIATE_HEADS(T)                                                            \
  template SlotClassLogits<T> classify(const ParamBinding<T>&, const WwtConfig&,            \
                                       const Var<T>&);                                      \
  template Var<T> cross_entropy(const Var<T>&, const std::vector<std::size_t>&, double);    \
  template DetOutputs<T> detect(const ParamBinding<T>&, const WwtConfig&, const Var<T>&,    \
                                const Var<T>&, const Var<T>&, double);                      \
  template Var<T> giou_rows(const Var<T>&, const Var<T>&);                                  \
  template DetectionLoss<T> detection_loss(const Var<T>&, const Var<T>&,                    \
                                           const std::vector<GtObject>&, const Assignment&, \
                                           const DetectionWeights&);                        \
  template Var<T> autoencode_prediction(const ParamBinding<T>&, const WwtConfig&,           \
                                        const Var<T>&, const Var<T>&, bool, std::size_t);   \
  template Var<T> reconstruction_mse(const Var<T>&, const Var<T>&, std::size_t);            \
  template Var<T> autoencode_loss(const ParamBinding<T>&, const WwtConfig&, const Var<T>&,  \
                                  const Var<T>&, const Var<T>&, bool, std::size_t);

WWT_INSTANTIATE_HEADS(float)
WWT_INSTANTIATE_HEADS(double)

}  // namespace wwt
