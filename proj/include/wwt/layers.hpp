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

#ifndef WWT_LAYERS_HPP_
#define WWT_LAYERS_HPP_

#include <string>

#include "wwt/ops.hpp"
#include "wwt/params.hpp"
#include "wwt/rng.hpp"

// Small building blocks shared by the backbone and the heads.
namespace wwt::layers {

inline void add_matrix(ParamMap<float>& out, const std::string& name, std::size_t rows,
                       std::size_t cols, std::uint64_t seed, double sigma = 0.02) {
  CounterRng rng(seed, 0, name);
  Tensor<float> w(Shape{rows, cols});
  for (float& v : w.data()) v = static_cast<float>(rng.truncated_normal(sigma));
  out.insert_or_assign(name, std::move(w));
}

inline void add_linear(ParamMap<float>& out, const std::string& prefix, std::size_t in,
                       std::size_t outd, std::uint64_t seed, double sigma = 0.02) {
  add_matrix(out, prefix + ".weight", in, outd, seed, sigma);
  out.insert_or_assign(prefix + ".bias", Tensor<float>(Shape{outd}));
}

inline void add_mlp(ParamMap<float>& out, const std::string& prefix, std::size_t in,
                    std::size_t hidden, std::size_t outd, std::uint64_t seed) {
  add_linear(out, prefix + ".fc1", in, hidden, seed);
  add_linear(out, prefix + ".fc2", hidden, outd, seed);
}

inline void add_norm(ParamMap<float>& out, const std::string& prefix, std::size_t d) {
  out.insert_or_assign(prefix + ".gain", Tensor<float>(Shape{d}, 1.0f));
  out.insert_or_assign(prefix + ".bias", Tensor<float>(Shape{d}));
}

template <typename T>
ad::Var<T> linear(const ParamBinding<T>& p, const std::string& prefix, const ad::Var<T>& x) {
  return ad::add(ad::matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
}

// fc1 -> gelu -> fc2
template <typename T>
ad::Var<T> mlp(const ParamBinding<T>& p, const std::string& prefix, const ad::Var<T>& x) {
  return linear(p, prefix + ".fc2", ad::gelu(linear(p, prefix + ".fc1", x)));
}

template <typename T>
ad::Var<T> norm(const ParamBinding<T>& p, const std::string& prefix, const ad::Var<T>& x,
                double eps) {
  return ad::layer_norm(x, p(prefix + ".gain"), p(prefix + ".bias"), eps);
}

}  // namespace wwt::layers

#endif  // WWT_LAYERS_HPP_
