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

// Shared helpers for the unit tests.

#ifndef WWT_TESTS_TESTING_HPP_
#define WWT_TESTS_TESTING_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wwt/ops.hpp"
#include "wwt/rng.hpp"
#include "wwt/tensor.hpp"

namespace wwt::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  CounterRng rng(seed, 0, "test");
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

// |analytic - numeric| / max(|analytic| + |numeric|, floor)
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

using LossFn = std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

// Largest relative error between backward() and central differences over every
// input element.
inline double grad_check(const LossFn& f, const std::vector<Tensor<double>>& inputs,
                         double h = 1e-5, double floor = 1e-6) {
  ad::Tape<double> tape;
  std::vector<ad::Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
  tape.backward(f(tape, vars));
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> g = tape.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor<double>> moved = inputs;
        moved[k][i] += delta;
        ad::Tape<double> t2;
        std::vector<ad::Var<double>> v2;
        for (const auto& t : moved) v2.push_back(t2.leaf(t, false));
        return f(t2, v2).value().item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      worst = std::max(worst, rel_error(g[i], numeric, floor));
    }
  }
  return worst;
}

}  // namespace wwt::testing

#endif  // WWT_TESTS_TESTING_HPP_
