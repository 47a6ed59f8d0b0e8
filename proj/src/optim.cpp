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

#include "wwt/optim.hpp"

#include <cmath>
#include <numbers>

namespace wwt {

template <typename T>
void adamw_step(ParamMap<T>& params, const ParamMap<T>& grads, AdamWState<T>& state,
                const AdamWConfig& cfg,
                const std::function<bool(const std::string&)>& decays) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("gradient for unknown parameter '" + name + "'");
    Tensor<T>& p = it->second;
    if (p.shape() != g.shape()) {
      throw DimensionError("adamw: parameter '" + name + "' has shape " +
                           to_string(p.shape()) + " but gradient " + to_string(g.shape()));
    }
    auto [mi, fresh_m] = state.m.try_emplace(name, p.shape());
    auto [vi, fresh_v] = state.v.try_emplace(name, p.shape());
    Tensor<T>& m = mi->second;
    Tensor<T>& v = vi->second;
    const double wd = (!decays || decays(name)) ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double pi = static_cast<double>(p[i]);
      const double gi = static_cast<double>(g[i]);
      pi -= cfg.lr * wd * pi;
      const double mi_ = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi_ = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi_);
      v[i] = static_cast<T>(vi_);
      pi -= cfg.lr * (mi_ / bc1) / (std::sqrt(vi_ / bc2) + cfg.eps);
      p[i] = static_cast<T>(pi);
    }
  }
}

double cosine_lr(long step, long warmup_steps, long total_steps, double base_lr,
                 double min_lr) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return base_lr;
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(total_steps - warmup_steps);
  progress = std::min(1.0, std::max(0.0, progress));
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

bool default_decays(const std::string& name, std::size_t rank) {
  if (rank < 2) return false;
  return name != "pos_embed" && name != "slot_queries";
}

template void adamw_step(ParamMap<float>&, const ParamMap<float>&, AdamWState<float>&,
                         const AdamWConfig&, const std::function<bool(const std::string&)>&);
template void adamw_step(ParamMap<double>&, const ParamMap<double>&, AdamWState<double>&,
                         const AdamWConfig&, const std::function<bool(const std::string&)>&);

}  // namespace wwt
