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

#ifndef WWT_OPS_HPP_
#define WWT_OPS_HPP_

#include <vector>

#include "wwt/tape.hpp"

// Differentiable primitives. Binary elementwise ops broadcast numpy-style;
// matmul broadcasts over leading batch extents.
namespace wwt::ad {

enum class Pointwise { kGelu, kRelu, kSigmoid };

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// a · bᵀ over the last two axes.
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
// aᵀ · b over the last two axes.
template <typename T> Var<T> matmul_tn(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> minimum(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> maximum(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> scale(const Var<T>& a, double factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, double c);

template <typename T> Var<T> pointwise(const Var<T>& a, Pointwise fn);
template <typename T> Var<T> gelu(const Var<T>& a) { return pointwise(a, Pointwise::kGelu); }
template <typename T> Var<T> relu(const Var<T>& a) { return pointwise(a, Pointwise::kRelu); }
template <typename T> Var<T> sigmoid(const Var<T>& a) { return pointwise(a, Pointwise::kSigmoid); }
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> abs(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);

template <typename T>
Var<T> softmax_along(const Var<T>& a, std::size_t axis, double temperature = 1.0);
template <typename T>
Var<T> log_softmax_along(const Var<T>& a, std::size_t axis);
// Normalizes over the last axis, then applies gain and bias (both [last]).
template <typename T>
Var<T> layer_norm(const Var<T>& a, const Var<T>& gain, const Var<T>& bias,
                  double eps);

template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& perm);
// Swaps the last two axes.
template <typename T> Var<T> transpose(const Var<T>& a);
template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t len);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
// Prepends an axis of extent n, repeating a.
template <typename T> Var<T> expand_front(const Var<T>& a, std::size_t n);
// [B,H,W,C] -> [B,H*f,W*f,C] by pixel replication.
template <typename T> Var<T> upsample_nearest2d(const Var<T>& a, std::size_t factor);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> sum_axis(const Var<T>& a, std::size_t axis, bool keepdim = false);
template <typename T> Var<T> mean_axis(const Var<T>& a, std::size_t axis, bool keepdim = false);

// Plain (non-differentiable) reference routines shared by tests and heads.
template <typename T>
Tensor<T> softmax_values(const Tensor<T>& a, std::size_t axis, double temperature = 1.0);

}  // namespace wwt::ad

#endif  // WWT_OPS_HPP_
