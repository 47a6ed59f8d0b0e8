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

#ifndef WWT_MODEL_HPP_
#define WWT_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "wwt/ops.hpp"
#include "wwt/params.hpp"

namespace wwt {

enum class SoftmaxAxisMode {
  // Softmax_T normalizes over tokens, Softmax_S over slots.
  kLiteral,
  // Each update normalizes over its source axis instead.
  kSwapped,
};

struct WwtConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t dim = 64;
  std::size_t slots = 8;
  std::size_t heads = 2;
  std::size_t blocks = 4;
  std::size_t mlp_hidden_t = 256;
  std::size_t mlp_hidden_s = 256;
  std::size_t mlp_hidden_a = 96;
  std::size_t num_classes = 8;
  SoftmaxAxisMode softmax_axis_mode = SoftmaxAxisMode::kLiteral;
  bool prenorm = true;
  // false replaces MLP-over-attention by identity propagation of A'.
  bool mask_mlp = true;
  double ln_eps = 1e-5;
  // Input pixels in [0,1] are mapped to (p - pixel_mean) / pixel_std.
  double pixel_mean = 0.5;
  double pixel_std = 0.5;
  std::size_t head_hidden = 128;
  std::size_t decoder_hidden = 64;
  std::size_t det_hidden = 128;
  std::size_t teacher_dim = 32;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }

  // Throws ConfigError on inconsistent sizes.
  void validate() const;
};

// WWT-Micro, the desk-scale reference configuration.
WwtConfig micro_config();

// Backbone weights: patch embedding, positional embedding, slot queries and
// every block. Truncated-normal(0.02) matrices, zero biases, unit gains.
ParamMap<float> init_backbone_params(const WwtConfig& cfg, std::uint64_t seed);

template <typename T>
struct BackboneState {
  ad::Var<T> x;  // [B,T,d] tokens
  ad::Var<T> z;  // [B,S,d] slots
  ad::Var<T> A;  // [B,m,T,S] mask logits
};

// Per-layer record kept in trace mode.
template <typename T>
struct LayerTrace {
  ad::Var<T> mixed_logits;     // A' of the layer, materialized once
  ad::Var<T> token_weights;    // softmax used for the token update
  ad::Var<T> slot_weights;     // softmax used for the slot update
  BackboneState<T> after_attn; // (x', z', A')
  BackboneState<T> out;        // (x_{i+1}, z_{i+1}, A_{i+1})
  std::uint64_t macs = 0;
};

template <typename T>
struct ForwardResult {
  BackboneState<T> initial;
  BackboneState<T> out;
  std::vector<LayerTrace<T>> trace;
  std::uint64_t embed_macs = 0;
};

// images [B,H,W,3], already normalized -> [B,T,P*P*3] in raster token order.
template <typename T>
ad::Var<T> patchify(const ad::Var<T>& images, const WwtConfig& cfg);

// Linear patch embedding without positional embedding: [B,T,d].
template <typename T>
ad::Var<T> patch_embed(const ParamBinding<T>& p, const WwtConfig& cfg,
                       const ad::Var<T>& images);

template <typename T>
BackboneState<T> init_state(const ParamBinding<T>& p, const WwtConfig& cfg,
                            const ad::Var<T>& images);

template <typename T>
BackboneState<T> mu_attn(const ParamBinding<T>& p, const WwtConfig& cfg,
                         std::size_t block, const BackboneState<T>& s,
                         LayerTrace<T>* trace = nullptr);

template <typename T>
BackboneState<T> block_mlps(const ParamBinding<T>& p, const WwtConfig& cfg,
                            std::size_t block, const BackboneState<T>& s);

template <typename T>
ForwardResult<T> wwt_forward(const ParamBinding<T>& p, const WwtConfig& cfg,
                             const ad::Var<T>& images, bool keep_trace = false);

// Mean over heads: [B,m,T,S] -> [B,T,S].
template <typename T>
ad::Var<T> reduce_heads(const ad::Var<T>& A);

// F[t,:] = sum_s A[t,s] z[s,:]; batched [B,T,S] x [B,S,d] -> [B,T,d].
template <typename T>
ad::Var<T> reconstruct_dense(const ad::Var<T>& A, const ad::Var<T>& z);

// Plain version: A [T,S], z [S,d] -> F [H,W,d] over the raster grid.
template <typename T>
Tensor<T> reconstruct_dense(const Tensor<T>& A, const Tensor<T>& z, std::size_t grid);

// Pixel images [B,H,W,3] in [0,1] -> normalized network input.
Tensor<float> normalize_pixels(const Tensor<float>& pixels, const WwtConfig& cfg);

struct BlockFlops {
  std::uint64_t projections = 0;
  std::uint64_t logits = 0;
  std::uint64_t values = 0;
  std::uint64_t mlp_t = 0;
  std::uint64_t mlp_s = 0;
  std::uint64_t mlp_a = 0;
  std::uint64_t total() const {
    return projections + logits + values + mlp_t + mlp_s + mlp_a;
  }
};

// Multiply-accumulate counts per image.
struct FlopReport {
  std::uint64_t patch_embed = 0;
  BlockFlops block;
  std::uint64_t total = 0;
  std::uint64_t vit_block = 0;  // ViT block at the same d and sequence length T
  std::uint64_t vit_total = 0;
  double ratio() const { return static_cast<double>(total) / static_cast<double>(vit_total); }
};

FlopReport count_flops(const WwtConfig& cfg);

// Chooses MLP hidden widths so a block's MACs match the ViT block at the same
// d and T (4d for MLP_T and MLP_S, remaining budget to MLP_A).
WwtConfig match_vit_flops(WwtConfig cfg);

}  // namespace wwt

#endif  // WWT_MODEL_HPP_
