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

#ifndef WWT_PARAMS_HPP_
#define WWT_PARAMS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "wwt/tape.hpp"
#include "wwt/tensor.hpp"

namespace wwt {

// Learnable weights addressed by hierarchical dotted names
// ("blocks.0.q.weight"). Sorted keys give a stable iteration order.
template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

template <typename U, typename T>
ParamMap<U> cast_params(const ParamMap<T>& in) {
  ParamMap<U> out;
  for (const auto& [name, t] : in) out.emplace(name, t.template cast<U>());
  return out;
}

// Puts parameters on a tape on first use. Parameters rejected by the
// trainable predicate enter as constants.
template <typename T>
class ParamBinding {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  ParamBinding(ad::Tape<T>& tape, const ParamMap<T>& params, Predicate trainable = {})
      : tape_(&tape), params_(&params), trainable_(std::move(trainable)) {}

  ad::Var<T> operator()(const std::string& name) const {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto p = params_->find(name);
    if (p == params_->end()) throw ConfigError("missing parameter '" + name + "'");
    const bool rg = !trainable_ || trainable_(name);
    auto v = tape_->leaf(p->second, rg, name);
    bound_.emplace(name, v);
    return v;
  }

  bool has(const std::string& name) const { return params_->count(name) != 0; }
  ad::Tape<T>& tape() const { return *tape_; }

  // Gradients of every bound trainable parameter after tape.backward().
  ParamMap<T> gradients() const {
    ParamMap<T> out;
    for (const auto& [name, v] : bound_) {
      if (tape_->requires_grad(v.id())) out.emplace(name, tape_->grad(v));
    }
    return out;
  }

  const std::map<std::string, ad::Var<T>>& bound() const { return bound_; }

 private:
  ad::Tape<T>* tape_;
  const ParamMap<T>* params_;
  Predicate trainable_;
  mutable std::map<std::string, ad::Var<T>> bound_;
};

// Binary checkpoint: "WWT1", u32 version, u64 total byte length, u32 entry
// count, then per entry: u32 name length, utf8 name, u32 rank, u64 extents,
// little-endian f32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamMap<float>& params);
ParamMap<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace wwt

#endif  // WWT_PARAMS_HPP_
