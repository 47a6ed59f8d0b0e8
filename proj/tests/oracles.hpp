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

// Loop-expanded reference computations shared by the unit and acceptance tests.

#ifndef WWT_TESTS_ORACLES_HPP_
#define WWT_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "wwt/params.hpp"
#include "wwt/tensor.hpp"

namespace wwt::testing {

inline Tensor<double> row_vec(std::initializer_list<double> v) {
  return Tensor<double>(Shape{v.size()}, std::vector<double>(v));
}

inline double gelu_ref(double x) { return 0.5 * x * (1 + std::erf(x / std::sqrt(2.0))); }

// y = gelu(x W1 + b1) W2 + b2 for a single row.
inline std::vector<double> mlp_ref(const ParamMap<double>& p, const std::string& pre,
                            const std::vector<double>& x) {
  const auto& w1 = p.at(pre + ".fc1.weight");
  const auto& b1 = p.at(pre + ".fc1.bias");
  const auto& w2 = p.at(pre + ".fc2.weight");
  const auto& b2 = p.at(pre + ".fc2.bias");
  const std::size_t in = w1.dim(0), hid = w1.dim(1), out = w2.dim(1);
  std::vector<double> h(hid), y(out);
  for (std::size_t j = 0; j < hid; ++j) {
    double s = b1[j];
    for (std::size_t i = 0; i < in; ++i) s += x[i] * w1[i * hid + j];
    h[j] = gelu_ref(s);
  }
  for (std::size_t j = 0; j < out; ++j) {
    double s = b2[j];
    for (std::size_t i = 0; i < hid; ++i) s += h[i] * w2[i * out + j];
    y[j] = s;
  }
  return y;
}

// Row-wise x W + b for x [N,d].
inline std::vector<std::vector<double>> proj(const ParamMap<double>& p, const std::string& pre,
                                      const Tensor<double>& x, std::size_t N, std::size_t d) {
  const auto& w = p.at(pre + ".weight");
  const auto& b = p.at(pre + ".bias");
  std::vector<std::vector<double>> out(N, std::vector<double>(d));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = 0; j < d; ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < d; ++i) s += x[n * d + i] * w[i * d + j];
      out[n][j] = s;
    }
  return out;
}

struct AttnRef {
  Tensor<double> x, z, A;
};

// Loop expansion of the mutual attention update without pre-normalization,
// literal softmax axes. x [T,d], z [S,d], A [m,T,S].
inline AttnRef mu_attn_ref(const ParamMap<double>& p, std::size_t m, const Tensor<double>& x,
                    const Tensor<double>& z, const Tensor<double>& A) {
  const std::size_t T = x.dim(0), S = z.dim(0), d = x.dim(1), hd = d / m;
  const auto q = proj(p, "blocks.0.q", x, T, d), k = proj(p, "blocks.0.k", z, S, d);
  const auto v1 = proj(p, "blocks.0.v1", z, S, d), v2 = proj(p, "blocks.0.v2", x, T, d);
  AttnRef r{x, z, A};
  for (std::size_t h = 0; h < m; ++h) {
    std::vector<std::vector<double>> a(T, std::vector<double>(S));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < S; ++s) {
        double dot = 0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[t][h * hd + c] * k[s][h * hd + c];
        a[t][s] = A[(h * T + t) * S + s] + dot / std::sqrt(static_cast<double>(hd));
        r.A[(h * T + t) * S + s] = a[t][s];
      }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < S; ++s) {
        double col = 0, row = 0;
        for (std::size_t u = 0; u < T; ++u) col += std::exp(a[u][s]);
        for (std::size_t u = 0; u < S; ++u) row += std::exp(a[t][u]);
        const double wx = std::exp(a[t][s]) / col, wz = std::exp(a[t][s]) / row;
        for (std::size_t c = 0; c < hd; ++c) {
          r.x[t * d + h * hd + c] += wx * v1[s][h * hd + c];
          r.z[s * d + h * hd + c] += wz * v2[t][h * hd + c];
        }
      }
  }
  return r;
}

inline Tensor<double> batch1(const Tensor<double>& t) {
  Shape s{1};
  for (auto e : t.shape()) s.push_back(e);
  return t.reshaped(s);
}

inline double brute_force(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size(), m = cost[0].size();
  std::vector<std::size_t> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  double best = INFINITY;
  // Every injection rows -> cols appears as the prefix of some permutation.
  do {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i][cols[i]];
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace wwt::testing

#endif  // WWT_TESTS_ORACLES_HPP_
