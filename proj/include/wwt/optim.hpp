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

#ifndef WWT_OPTIM_HPP_
#define WWT_OPTIM_HPP_

#include <functional>
#include <string>

#include "wwt/params.hpp"

namespace wwt {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

template <typename T>
struct AdamWState {
  ParamMap<T> m;
  ParamMap<T> v;
  long step = 0;
};

// One AdamW step with decoupled weight decay and bias-corrected moments.
// Parameters without a gradient entry are left alone. `decays` selects the
// tensors that receive weight decay (all when empty).
template <typename T>
void adamw_step(ParamMap<T>& params, const ParamMap<T>& grads, AdamWState<T>& state,
                const AdamWConfig& cfg,
                const std::function<bool(const std::string&)>& decays = {});

// Linear warmup to base_lr, then cosine decay to min_lr at total_steps.
double cosine_lr(long step, long warmup_steps, long total_steps, double base_lr,
                 double min_lr);

// Weight-decay rule used by training: matrices only, excluding embeddings.
bool default_decays(const std::string& name, std::size_t rank);

}  // namespace wwt

#endif  // WWT_OPTIM_HPP_
