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

#include "wwt/model.hpp"

#include <cmath>

#include "wwt/layers.hpp"

namespace wwt {

using ad::Var;

void WwtConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (patch_size == 0 || image_size == 0) fail("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (dim == 0 || heads == 0 || dim % heads != 0) fail("dim must be a positive multiple of heads");
  if (slots == 0) fail("slots must be positive");
  if (num_classes == 0) fail("num_classes must be positive");
  if (mlp_hidden_t == 0 || mlp_hidden_s == 0 || mlp_hidden_a == 0) {
    fail("MLP hidden widths must be positive");
  }
  if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
  if (!(pixel_std > 0.0)) fail("pixel_std must be positive");
}

WwtConfig micro_config() {
  WwtConfig cfg;
  cfg.image_size = 64;
  cfg.patch_size = 8;
  cfg.dim = 64;
  cfg.slots = 8;
  cfg.heads = 2;
  cfg.blocks = 4;
  return match_vit_flops(cfg);
}

namespace {

using layers::add_linear;
using layers::add_matrix;
using layers::add_norm;
using layers::linear;
using layers::mlp;

template <typename T>
Var<T> norm(const ParamBinding<T>& p, const WwtConfig& cfg, const std::string& prefix,
            const Var<T>& x) {
  if (!cfg.prenorm) return x;
  return ad::layer_norm(x, p(prefix + ".gain"), p(prefix + ".bias"), cfg.ln_eps);
}

// [B,N,d] -> [B,m,N,d/m]
template <typename T>
Var<T> split_heads(const Var<T>& x, const WwtConfig& cfg) {
  const std::size_t B = x.dim(0), N = x.dim(1);
  return ad::permute(ad::reshape(x, Shape{B, N, cfg.heads, cfg.head_dim()}), {0, 2, 1, 3});
}

// [B,m,N,d/m] -> [B,N,d]
template <typename T>
Var<T> merge_heads(const Var<T>& x, const WwtConfig& cfg) {
  const std::size_t B = x.dim(0), N = x.dim(2);
  return ad::reshape(ad::permute(x, {0, 2, 1, 3}), Shape{B, N, cfg.dim});
}

std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i); }

}  // namespace

ParamMap<float> init_backbone_params(const WwtConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamMap<float> out;
  const std::size_t d = cfg.dim;
  add_linear(out, "patch_embed", cfg.patch_dim(), d, seed);
  add_matrix(out, "pos_embed", cfg.tokens(), d, seed);
  add_matrix(out, "slot_queries", cfg.slots, d, seed);
  const std::size_t ms = cfg.heads * cfg.slots;
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = block_prefix(i);
    for (const char* n : {".norm_x1", ".norm_z1", ".norm_x2", ".norm_z2"}) add_norm(out, b + n, d);
    for (const char* n : {".q", ".k", ".v1", ".v2"}) add_linear(out, b + n, d, d, seed);
    add_linear(out, b + ".mlp_t.fc1", d, cfg.mlp_hidden_t, seed);
    add_linear(out, b + ".mlp_t.fc2", cfg.mlp_hidden_t, d, seed);
    add_linear(out, b + ".mlp_s.fc1", d, cfg.mlp_hidden_s, seed);
    add_linear(out, b + ".mlp_s.fc2", cfg.mlp_hidden_s, d, seed);
    if (cfg.mask_mlp) {
      add_linear(out, b + ".mlp_a.fc1", ms + d, cfg.mlp_hidden_a, seed);
      add_linear(out, b + ".mlp_a.fc2", cfg.mlp_hidden_a, ms, seed);
    }
  }
  return out;
}

template <typename T>
Var<T> patchify(const Var<T>& images, const WwtConfig& cfg) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != cfg.image_size || s[2] != cfg.image_size || s[3] != 3) {
    throw DimensionError("expected images [B," + std::to_string(cfg.image_size) + "," +
                         std::to_string(cfg.image_size) + ",3], got " + to_string(s));
  }
  const std::size_t B = s[0], G = cfg.grid(), P = cfg.patch_size;
  auto x = ad::reshape(images, Shape{B, G, P, G, P, 3});
  x = ad::permute(x, {0, 1, 3, 2, 4, 5});  // [B, row, col, py, px, c]
  return ad::reshape(x, Shape{B, G * G, P * P * 3});
}

template <typename T>
Var<T> patch_embed(const ParamBinding<T>& p, const WwtConfig& cfg, const Var<T>& images) {
  return linear(p, "patch_embed", patchify(images, cfg));
}

template <typename T>
BackboneState<T> init_state(const ParamBinding<T>& p, const WwtConfig& cfg,
                            const Var<T>& images) {
  const std::size_t B = images.dim(0);
  BackboneState<T> s;
  s.x = ad::add(patch_embed(p, cfg, images), p("pos_embed"));
  s.z = ad::expand_front(p("slot_queries"), B);
  s.A = p.tape().constant(Tensor<T>(Shape{B, cfg.heads, cfg.tokens(), cfg.slots}));
  return s;
}

template <typename T>
BackboneState<T> mu_attn(const ParamBinding<T>& p, const WwtConfig& cfg, std::size_t block,
                         const BackboneState<T>& s, LayerTrace<T>* trace) {
  const std::string b = block_prefix(block);
  const Var<T> xh = norm(p, cfg, b + ".norm_x1", s.x);
  const Var<T> zh = norm(p, cfg, b + ".norm_z1", s.z);
  const Var<T> q = split_heads(linear(p, b + ".q", xh), cfg);
  const Var<T> k = split_heads(linear(p, b + ".k", zh), cfg);
  const Var<T> v1 = split_heads(linear(p, b + ".v1", zh), cfg);
  const Var<T> v2 = split_heads(linear(p, b + ".v2", xh), cfg);

  // One logit tensor serves both directions.
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  const Var<T> mixed = ad::add(s.A, ad::scale(ad::matmul_nt(q, k), inv_sqrt));
  constexpr std::size_t kTokenAxis = 2, kSlotAxis = 3;
  const bool literal = cfg.softmax_axis_mode == SoftmaxAxisMode::kLiteral;
  const Var<T> w_x = ad::softmax_along(mixed, literal ? kTokenAxis : kSlotAxis);
  const Var<T> w_z = ad::softmax_along(mixed, literal ? kSlotAxis : kTokenAxis);

  BackboneState<T> out;
  out.x = ad::add(s.x, merge_heads(ad::matmul(w_x, v1), cfg));
  out.z = ad::add(s.z, merge_heads(ad::matmul_tn(w_z, v2), cfg));
  out.A = mixed;
  if (trace) {
    trace->mixed_logits = mixed;
    trace->token_weights = w_x;
    trace->slot_weights = w_z;
    trace->after_attn = out;
  }
  return out;
}

template <typename T>
BackboneState<T> block_mlps(const ParamBinding<T>& p, const WwtConfig& cfg, std::size_t block,
                            const BackboneState<T>& s) {
  const std::string b = block_prefix(block);
  const Var<T> xh = norm(p, cfg, b + ".norm_x2", s.x);
  const Var<T> zh = norm(p, cfg, b + ".norm_z2", s.z);
  BackboneState<T> out;
  out.x = ad::add(s.x, mlp(p, b + ".mlp_t", xh));
  out.z = ad::add(s.z, mlp(p, b + ".mlp_s", zh));
  if (!cfg.mask_mlp) {
    out.A = s.A;
    return out;
  }
  const std::size_t B = s.A.dim(0), m = cfg.heads, T_ = cfg.tokens(), S = cfg.slots;
  // Per token: its m*S mask logits followed by its normalized token.
  const Var<T> a_tok = ad::reshape(ad::permute(s.A, {0, 2, 1, 3}), Shape{B, T_, m * S});
  const Var<T> a_next = mlp(p, b + ".mlp_a", ad::concat<T>({a_tok, xh}, 2));
  out.A = ad::permute(ad::reshape(a_next, Shape{B, T_, m, S}), {0, 2, 1, 3});
  return out;
}

template <typename T>
ForwardResult<T> wwt_forward(const ParamBinding<T>& p, const WwtConfig& cfg,
                             const Var<T>& images, bool keep_trace) {
  ForwardResult<T> r;
  ad::Tape<T>& tape = p.tape();
  std::uint64_t macs0 = tape.macs();
  r.initial = init_state(p, cfg, images);
  r.embed_macs = tape.macs() - macs0;
  BackboneState<T> s = r.initial;
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    LayerTrace<T> lt;
    macs0 = tape.macs();
    try {
      s = block_mlps(p, cfg, i, mu_attn(p, cfg, i, s, keep_trace ? &lt : nullptr));
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("block " + std::to_string(i) + ": " + e.what());
    }
    if (keep_trace) {
      lt.out = s;
      lt.macs = tape.macs() - macs0;
      r.trace.push_back(lt);
    }
  }
  r.out = s;
  return r;
}

template <typename T>
Var<T> reduce_heads(const Var<T>& A) {
  return ad::mean_axis(A, 1);
}

template <typename T>
Var<T> reconstruct_dense(const Var<T>& A, const Var<T>& z) {
  return ad::matmul(A, z);
}

template <typename T>
Tensor<T> reconstruct_dense(const Tensor<T>& A, const Tensor<T>& z, std::size_t grid) {
  if (A.rank() != 2 || z.rank() != 2 || A.dim(1) != z.dim(0) || A.dim(0) != grid * grid) {
    throw DimensionError("reconstruct_dense: A " + to_string(A.shape()) + ", z " +
                         to_string(z.shape()));
  }
  const std::size_t S = z.dim(0), d = z.dim(1);
  Tensor<T> F(Shape{grid, grid, d});
  for (std::size_t t = 0; t < grid * grid; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const T a = A[t * S + s];
      for (std::size_t c = 0; c < d; ++c) F[t * d + c] += a * z[s * d + c];
    }
  }
  return F;
}

Tensor<float> normalize_pixels(const Tensor<float>& pixels, const WwtConfig& cfg) {
  Tensor<float> out(pixels.shape());
  const float mu = static_cast<float>(cfg.pixel_mean);
  const float inv = static_cast<float>(1.0 / cfg.pixel_std);
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = (pixels[i] - mu) * inv;
  return out;
}

FlopReport count_flops(const WwtConfig& cfg) {
  cfg.validate();
  const std::uint64_t T = cfg.tokens(), S = cfg.slots, d = cfg.dim, m = cfg.heads;
  FlopReport r;
  r.patch_embed = T * cfg.patch_dim() * d;
  r.block.projections = 2 * T * d * d + 2 * S * d * d;
  r.block.logits = T * S * d;
  r.block.values = 2 * T * S * d;
  r.block.mlp_t = 2 * T * d * cfg.mlp_hidden_t;
  r.block.mlp_s = 2 * S * d * cfg.mlp_hidden_s;
  r.block.mlp_a = cfg.mask_mlp ? T * (m * S + d) * cfg.mlp_hidden_a + T * cfg.mlp_hidden_a * m * S
                               : 0;
  r.total = r.patch_embed + cfg.blocks * r.block.total();
  // qkv + output projection, QK^T, attention-weighted values, 4d MLP.
  r.vit_block = 4 * T * d * d + 2 * T * T * d + 8 * T * d * d;
  r.vit_total = r.patch_embed + cfg.blocks * r.vit_block;
  return r;
}

WwtConfig match_vit_flops(WwtConfig cfg) {
  cfg.mlp_hidden_t = 4 * cfg.dim;
  cfg.mlp_hidden_s = 4 * cfg.dim;
  cfg.mlp_hidden_a = 1;
  const FlopReport r = count_flops(cfg);
  const std::uint64_t rest = r.block.total() - r.block.mlp_a;
  const std::uint64_t per_unit =
      cfg.tokens() * (2 * cfg.heads * cfg.slots + cfg.dim);
  cfg.mlp_hidden_a = r.vit_block > rest ? std::max<std::uint64_t>(1, (r.vit_block - rest) / per_unit)
                                        : 1;
  return cfg;
}

#define WWT_INSTANTIATE_MODEL(T)                                                          \
  template Var<T> patchify(const Var<T>&, const WwtConfig&);                              \
  template Var<T> patch_embed(const ParamBinding<T>&, const WwtConfig&, const Var<T>&);   \
  template BackboneState<T> init_state(const ParamBinding<T>&, const WwtConfig&,          \
                                       const Var<T>&);                                    \
  template BackboneState<T> mu_attn(const ParamBinding<T>&, const WwtConfig&,             \
                                    std::size_t, const BackboneState<T>&,                 \
                                    LayerTrace<T>*);                                      \
  template BackboneState<T> block_mlps(const ParamBinding<T>&, const WwtConfig&,          \
                                       std::size_t, const BackboneState<T>&);             \
  template ForwardResult<T> wwt_forward(const ParamBinding<T>&, const WwtConfig&,         \
                                        const Var<T>&, bool);                             \
  template Var<T> reduce_heads(const Var<T>&);                                            \
  template Var<T> reconstruct_dense(const Var<T>&, const Var<T>&);                        \
  template Tensor<T> reconstruct_dense(const Tensor<T>&, const Tensor<T>&, std::size_t);

WWT_INSTANTIATE_MODEL(float)
WWT_INSTANTIATE_MODEL(double)

}  // namespace wwt
