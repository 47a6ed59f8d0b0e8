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

#include "wwt/ops.hpp"

// Eigen's coefficient-based small-product path peels by pointer alignment,
// which makes results depend on where buffers land. Always take the packed GEMM path.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <type_traits>

namespace wwt::ad {
namespace {

template <typename T>
Tape<T>& tape_of(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw GraphError("operands live on different tapes");
  return a.tape();
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// ---------------------------------------------------------------------------
// Broadcasting

struct BroadcastPlan {
  enum class Kind { kSame, kSuffixB, kSuffixA, kGeneral };
  Kind kind = Kind::kSame;
  Shape out;
  std::size_t na = 1, nb = 1;
  std::vector<std::size_t> sa, sb;  // aligned strides, 0 on broadcast axes
};

bool is_suffix(const Shape& small, const Shape& out) {
  // small (right-aligned) equals out on a trailing run, 1/absent before it.
  const std::size_t r = out.size(), off = r - small.size();
  std::size_t k = r;
  while (k > off && small[k - 1 - off] == out[k - 1]) --k;
  for (std::size_t i = off; i < k; ++i) {
    if (small[i - off] != 1) return false;
  }
  return true;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  p.na = numel(a);
  p.nb = numel(b);
  if (a == b) {
    p.out = a;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::size_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + to_string(a) + " with " +
                           to_string(b));
    }
    p.out[i] = std::max(da, db);
  }
  if (a == p.out && is_suffix(b, p.out)) {
    p.kind = BroadcastPlan::Kind::kSuffixB;
    return p;
  }
  if (b == p.out && is_suffix(a, p.out)) {
    p.kind = BroadcastPlan::Kind::kSuffixA;
    return p;
  }
  p.kind = BroadcastPlan::Kind::kGeneral;
  p.sa.assign(r, 0);
  p.sb.assign(r, 0);
  const auto ta = strides_of(a), tb = strides_of(b);
  for (std::size_t i = 0; i < r; ++i) {
    if (i + a.size() >= r && a[i + a.size() - r] != 1) p.sa[i] = ta[i + a.size() - r];
    if (i + b.size() >= r && b[i + b.size() - r] != 1) p.sb[i] = tb[i + b.size() - r];
  }
  return p;
}

template <typename F>
void visit(const BroadcastPlan& p, F&& f) {
  const std::size_t n = numel(p.out);
  switch (p.kind) {
    case BroadcastPlan::Kind::kSame:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i);
      return;
    case BroadcastPlan::Kind::kSuffixB:
      for (std::size_t o = 0; o < n; o += p.nb)
        for (std::size_t j = 0; j < p.nb; ++j) f(o + j, o + j, j);
      return;
    case BroadcastPlan::Kind::kSuffixA:
      for (std::size_t o = 0; o < n; o += p.na)
        for (std::size_t j = 0; j < p.na; ++j) f(o + j, j, o + j);
      return;
    case BroadcastPlan::Kind::kGeneral: {
      const std::size_t r = p.out.size();
      std::vector<std::size_t> idx(r, 0);
      std::size_t ia = 0, ib = 0;
      for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t ax = r; ax-- > 0;) {
          ++idx[ax];
          ia += p.sa[ax];
          ib += p.sb[ax];
          if (idx[ax] < p.out[ax]) break;
          ia -= p.sa[ax] * idx[ax];
          ib -= p.sb[ax] * idx[ax];
          idx[ax] = 0;
        }
      }
      return;
    }
  }
}

// Elementwise binary op with forward f(a,b) and partials da(a,b), db(a,b).
template <typename T, typename Fwd, typename Da, typename Db>
Var<T> binary(std::string_view name, const Var<T>& a, const Var<T>& b, Fwd fwd,
              Da da, Db db) {
  Tape<T>& tape = tape_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(av.shape(), bv.shape()));
  Tensor<T> out(plan->out);
  visit(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(av[ia], bv[ib]);
  });
  const std::size_t ida = a.id(), idb = b.id();
  return tape.record(name, std::move(out), {ida, idb},
                     [=](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& g = t.upstream(self);
                       const Tensor<T>& x = t.value(ida);
                       const Tensor<T>& y = t.value(idb);
                       if (t.requires_grad(ida)) {
                         Tensor<T>& gx = t.grad_buffer(ida);
                         visit(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                           gx[ia] += g[i] * da(x[ia], y[ib]);
                         });
                       }
                       if (t.requires_grad(idb)) {
                         Tensor<T>& gy = t.grad_buffer(idb);
                         visit(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                           gy[ib] += g[i] * db(x[ia], y[ib]);
                         });
                       }
                     });
}

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(std::string_view name, const Var<T>& a, Fwd fwd, Deriv deriv) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t ida = a.id();
  return a.tape().record(name, std::move(out), {ida},
                         [=](Tape<T>& t, std::size_t self) {
                           const Tensor<T>& g = t.upstream(self);
                           const Tensor<T>& x = t.value(ida);
                           const Tensor<T>& y = t.value(self);
                           Tensor<T>& gx = t.grad_buffer(ida);
                           for (std::size_t i = 0; i < x.size(); ++i) {
                             gx[i] += g[i] * deriv(x[i], y[i]);
                           }
                         });
}

// ---------------------------------------------------------------------------
// GEMM

// C[m×n] (+)= op(A)[m×k] · op(B)[k×n].
template <typename T>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const T* A, const T* B, T* C, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto em = static_cast<Eigen::Index>(m);
  const auto en = static_cast<Eigen::Index>(n);
  const auto ek = static_cast<Eigen::Index>(k);
  Eigen::Map<const Mat> Am(A, ta ? ek : em, ta ? em : ek);
  Eigen::Map<const Mat> Bm(B, tb ? en : ek, tb ? ek : en);
  Eigen::Map<Mat> Cm(C, em, en);
  if (!accumulate) Cm.setZero();
  if (m == 1 && n == 1) {
    // Eigen reduces 1x1 products through an alignment-peeled dot product.
    T acc = T{0};
    for (std::size_t i = 0; i < k; ++i) acc += A[i] * B[i];
    C[0] += acc;
    return;
  }
  if (!ta && !tb) {
    Cm.noalias() += Am * Bm;
  } else if (ta && !tb) {
    Cm.noalias() += Am.transpose() * Bm;
  } else if (!ta && tb) {
    Cm.noalias() += Am * Bm.transpose();
  } else {
    Cm.noalias() += Am.transpose() * Bm.transpose();
  }
}

template <typename T>
Var<T> matmul_impl(const Var<T>& a, const Var<T>& b, bool ta, bool tb) {
  Tape<T>& tape = tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(as) +
                         " and " + to_string(bs));
  }
  const std::size_t ar = as[as.size() - 2], ac = as.back();
  const std::size_t br = bs[bs.size() - 2], bc = bs.back();
  const std::size_t p = ta ? ac : ar, q = ta ? ar : ac;
  const std::size_t qb = tb ? bc : br, r = tb ? br : bc;
  if (q != qb) {
    throw DimensionError("matmul inner extents differ: " + to_string(as) +
                         (ta ? "ᵀ" : "") + " · " + to_string(bs) + (tb ? "ᵀ" : ""));
  }
  const Shape abatch(as.begin(), as.end() - 2), bbatch(bs.begin(), bs.end() - 2);
  const T* ap = a.value().ptr();
  const T* bp = b.value().ptr();
  const std::size_t ida = a.id(), idb = b.id();

  // Weight-sharing fast path: a [..,p,q] against a plain matrix b.
  if (bbatch.empty() && !ta) {
    const std::size_t rows = numel(as) / q;
    Shape os(abatch);
    os.push_back(p);
    os.push_back(r);
    Tensor<T> out(os);
    gemm<T>(false, tb, rows, r, q, ap, bp, out.ptr(), false);
    tape.add_macs(static_cast<std::uint64_t>(rows) * q * r);
    return tape.record("matmul", std::move(out), {ida, idb},
                       [=](Tape<T>& t, std::size_t self) {
                         const T* g = t.upstream(self).ptr();
                         const T* av = t.value(ida).ptr();
                         const T* bv = t.value(idb).ptr();
                         if (t.requires_grad(ida)) {
                           gemm<T>(false, !tb, rows, q, r, g, bv,
                                   t.grad_buffer(ida).ptr(), true);
                         }
                         if (t.requires_grad(idb)) {
                           if (!tb) {
                             gemm<T>(true, false, q, r, rows, av, g,
                                     t.grad_buffer(idb).ptr(), true);
                           } else {
                             gemm<T>(true, false, r, q, rows, g, av,
                                     t.grad_buffer(idb).ptr(), true);
                           }
                         }
                       });
  }

  // General path: per-batch GEMMs with broadcast batch extents.
  const BroadcastPlan bp_plan = plan_broadcast(abatch, bbatch);
  const std::size_t nbatch = numel(bp_plan.out);
  std::vector<std::size_t> aoff(nbatch), boff(nbatch);
  visit(bp_plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    aoff[i] = ia * ar * ac;
    boff[i] = ib * br * bc;
  });
  Shape os(bp_plan.out);
  os.push_back(p);
  os.push_back(r);
  Tensor<T> out(os);
  for (std::size_t i = 0; i < nbatch; ++i) {
    gemm<T>(ta, tb, p, r, q, ap + aoff[i], bp + boff[i], out.ptr() + i * p * r, false);
  }
  tape.add_macs(static_cast<std::uint64_t>(nbatch) * p * q * r);
  return tape.record(
      "matmul", std::move(out), {ida, idb}, [=](Tape<T>& t, std::size_t self) {
        const T* g = t.upstream(self).ptr();
        const T* av = t.value(ida).ptr();
        const T* bv = t.value(idb).ptr();
        const bool need_a = t.requires_grad(ida), need_b = t.requires_grad(idb);
        T* ga = need_a ? t.grad_buffer(ida).ptr() : nullptr;
        T* gb = need_b ? t.grad_buffer(idb).ptr() : nullptr;
        for (std::size_t i = 0; i < nbatch; ++i) {
          const T* gi = g + i * p * r;
          if (need_a) {
            if (!ta) {
              gemm<T>(false, !tb, p, q, r, gi, bv + boff[i], ga + aoff[i], true);
            } else {
              gemm<T>(tb, true, q, p, r, bv + boff[i], gi, ga + aoff[i], true);
            }
          }
          if (need_b) {
            if (!tb) {
              gemm<T>(!ta, false, q, r, p, av + aoff[i], gi, gb + boff[i], true);
            } else {
              gemm<T>(true, ta, r, q, p, gi, av + aoff[i], gb + boff[i], true);
            }
          }
        }
      });
}

// Exact erf-based GELU evaluated with Eigen's vectorized erf/exp. Work happens
// in owned (aligned) arrays: on unaligned maps Eigen evaluates the leading
// elements with the scalar erf, so results would depend on buffer addresses.
Var<float> gelu_fast(const Var<float>& a) {
  using Arr = Eigen::Array<float, Eigen::Dynamic, 1>;
  const Tensor<float>& av = a.value();
  const auto n = static_cast<Eigen::Index>(av.size());
  const Arr x = Eigen::Map<const Arr>(av.ptr(), n);
  const Arr y = 0.5f * x * (1.0f + (x * static_cast<float>(1.0 / std::numbers::sqrt2)).erf());
  Tensor<float> out(av.shape());
  std::copy(y.data(), y.data() + n, out.ptr());
  const std::size_t ida = a.id();
  return a.tape().record("gelu", std::move(out), {ida}, [=](Tape<float>& t, std::size_t self) {
    const Arr gx = Eigen::Map<const Arr>(t.upstream(self).ptr(), n);
    const Arr xx = Eigen::Map<const Arr>(t.value(ida).ptr(), n);
    const float inv_sqrt2 = static_cast<float>(1.0 / std::numbers::sqrt2);
    const float inv_sqrt2pi = static_cast<float>(1.0 / std::sqrt(2.0 * std::numbers::pi));
    const Arr d = gx * (0.5f * (1.0f + (xx * inv_sqrt2).erf()) +
                        xx * inv_sqrt2pi * (-0.5f * xx.square()).exp());
    float* dst = t.grad_buffer(ida).ptr();
    for (Eigen::Index i = 0; i < n; ++i) dst[i] += d[i];
  });
}

std::size_t check_axis(std::size_t axis, std::size_t rank, const char* op) {
  if (axis >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit sp{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) { return matmul_impl(a, b, false, false); }
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) { return matmul_impl(a, b, false, true); }
template <typename T>
Var<T> matmul_tn(const Var<T>& a, const Var<T>& b) { return matmul_impl(a, b, true, false); }

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary<T>("add", a, b, [](T x, T y) { return x + y; },
                   [](T, T) { return T{1}; }, [](T, T) { return T{1}; });
}
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary<T>("sub", a, b, [](T x, T y) { return x - y; },
                   [](T, T) { return T{1}; }, [](T, T) { return T{-1}; });
}
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary<T>("mul", a, b, [](T x, T y) { return x * y; },
                   [](T, T y) { return y; }, [](T x, T) { return x; });
}
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary<T>("div", a, b, [](T x, T y) { return x / y; },
                   [](T, T y) { return T{1} / y; },
                   [](T x, T y) { return -x / (y * y); });
}
template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  return binary<T>("minimum", a, b, [](T x, T y) { return x <= y ? x : y; },
                   [](T x, T y) { return x <= y ? T{1} : T{0}; },
                   [](T x, T y) { return x <= y ? T{0} : T{1}; });
}
template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
  return binary<T>("maximum", a, b, [](T x, T y) { return x >= y ? x : y; },
                   [](T x, T y) { return x >= y ? T{1} : T{0}; },
                   [](T x, T y) { return x >= y ? T{0} : T{1}; });
}

template <typename T>
Var<T> scale(const Var<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  return unary<T>("scale", a, [f](T x) { return f * x; }, [f](T, T) { return f; });
}
template <typename T>
Var<T> add_scalar(const Var<T>& a, double c) {
  const T k = static_cast<T>(c);
  return unary<T>("add_scalar", a, [k](T x) { return x + k; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> pointwise(const Var<T>& a, Pointwise fn) {
  switch (fn) {
    case Pointwise::kGelu: {
      if constexpr (std::is_same_v<T, float>) return gelu_fast(a);
      const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
      const T inv_sqrt2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
      return unary<T>(
          "gelu", a,
          [=](T x) { return T{0.5} * x * (T{1} + std::erf(x * inv_sqrt2)); },
          [=](T x, T) {
            return T{0.5} * (T{1} + std::erf(x * inv_sqrt2)) +
                   x * inv_sqrt2pi * std::exp(T{-0.5} * x * x);
          });
    }
    case Pointwise::kRelu:
      return unary<T>("relu", a, [](T x) { return x > T{0} ? x : T{0}; },
                      [](T x, T) { return x > T{0} ? T{1} : T{0}; });
    case Pointwise::kSigmoid:
      return unary<T>(
          "sigmoid", a,
          [](T x) {
            // Split by sign so exp never overflows.
            if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
            const T e = std::exp(x);
            return e / (T{1} + e);
          },
          [](T, T y) { return y * (T{1} - y); });
  }
  throw ValueError("unknown pointwise function");
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}
template <typename T>
Var<T> log(const Var<T>& a) {
  return unary<T>("log", a, [](T x) { return std::log(x); },
                  [](T x, T) { return T{1} / x; });
}
template <typename T>
Var<T> abs(const Var<T>& a) {
  return unary<T>("abs", a, [](T x) { return std::abs(x); },
                  [](T x, T) { return x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0}); });
}
template <typename T>
Var<T> square(const Var<T>& a) {
  return unary<T>("square", a, [](T x) { return x * x; },
                  [](T x, T) { return T{2} * x; });
}

template <typename T>
Tensor<T> softmax_values(const Tensor<T>& a, std::size_t axis, double temperature) {
  check_axis(axis, a.rank(), "softmax_along");
  if (!(temperature > 0.0)) throw ValueError("softmax temperature must be positive");
  const T inv_temp = static_cast<T>(1.0 / temperature);
  const AxisSplit sp = split_at(a.shape(), axis);
  Tensor<T> out(a.shape());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T mx = a[base];
      for (std::size_t k = 1; k < sp.n; ++k) mx = std::max(mx, a[base + k * sp.inner]);
      T total = 0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        const T e = std::exp((a[base + k * sp.inner] - mx) * inv_temp);
        out[base + k * sp.inner] = e;
        total += e;
      }
      const T inv = T{1} / total;
      for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] *= inv;
    }
  }
  return out;
}

template <typename T>
Var<T> softmax_along(const Var<T>& a, std::size_t axis, double temperature) {
  Tensor<T> out = softmax_values(a.value(), axis, temperature);
  const AxisSplit sp = split_at(a.shape(), axis);
  const T inv_temp = static_cast<T>(1.0 / temperature);
  const std::size_t ida = a.id();
  return a.tape().record(
      "softmax", std::move(out), {ida}, [=](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.upstream(self);
        const Tensor<T>& y = t.value(self);
        Tensor<T>& gx = t.grad_buffer(ida);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.n * sp.inner + in;
            T dot = 0;
            for (std::size_t k = 0; k < sp.n; ++k) {
              dot += g[base + k * sp.inner] * y[base + k * sp.inner];
            }
            for (std::size_t k = 0; k < sp.n; ++k) {
              const std::size_t i = base + k * sp.inner;
              gx[i] += y[i] * (g[i] - dot) * inv_temp;
            }
          }
        }
      });
}

template <typename T>
Var<T> log_softmax_along(const Var<T>& a, std::size_t axis) {
  check_axis(axis, a.rank(), "log_softmax_along");
  const Tensor<T>& av = a.value();
  const AxisSplit sp = split_at(av.shape(), axis);
  Tensor<T> out(av.shape());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T mx = av[base];
      for (std::size_t k = 1; k < sp.n; ++k) mx = std::max(mx, av[base + k * sp.inner]);
      T total = 0;
      for (std::size_t k = 0; k < sp.n; ++k) total += std::exp(av[base + k * sp.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t k = 0; k < sp.n; ++k) {
        out[base + k * sp.inner] = av[base + k * sp.inner] - lse;
      }
    }
  }
  const std::size_t ida = a.id();
  return a.tape().record(
      "log_softmax", std::move(out), {ida}, [=](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.upstream(self);
        const Tensor<T>& y = t.value(self);
        Tensor<T>& gx = t.grad_buffer(ida);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.n * sp.inner + in;
            T gsum = 0;
            for (std::size_t k = 0; k < sp.n; ++k) gsum += g[base + k * sp.inner];
            for (std::size_t k = 0; k < sp.n; ++k) {
              const std::size_t i = base + k * sp.inner;
              gx[i] += g[i] - std::exp(y[i]) * gsum;
            }
          }
        }
      });
}

template <typename T>
Var<T> layer_norm(const Var<T>& a, const Var<T>& gain, const Var<T>& bias,
                  double eps) {
  Tape<T>& tape = tape_of(a, gain);
  tape_of(a, bias);
  if (a.rank() == 0) throw DimensionError("layer_norm on a scalar");
  const std::size_t n = a.shape().back();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm gain/bias extent must equal last extent " +
                         std::to_string(n));
  }
  const Tensor<T>& av = a.value();
  const T* gp = gain.value().ptr();
  const T* bp = bias.value().ptr();
  const std::size_t rows = av.size() / n;
  Tensor<T> out(av.shape());
  // Cache normalized values and inverse std for backward.
  auto xhat = std::make_shared<std::vector<T>>(av.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.ptr() + r * n;
    T mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += x[i];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<T>(n);
    const T rs = T{1} / std::sqrt(var + static_cast<T>(eps));
    (*rstd)[r] = rs;
    for (std::size_t i = 0; i < n; ++i) {
      const T h = (x[i] - mu) * rs;
      (*xhat)[r * n + i] = h;
      out[r * n + i] = h * gp[i] + bp[i];
    }
  }
  const std::size_t ida = a.id(), idg = gain.id(), idb = bias.id();
  return tape.record(
      "layer_norm", std::move(out), {ida, idg, idb},
      [=](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.upstream(self);
        const T* gn = t.value(idg).ptr();
        if (t.requires_grad(idg)) {
          Tensor<T>& gg = t.grad_buffer(idg);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < n; ++i) gg[i] += g[r * n + i] * (*xhat)[r * n + i];
        }
        if (t.requires_grad(idb)) {
          Tensor<T>& gb = t.grad_buffer(idb);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[r * n + i];
        }
        if (t.requires_grad(ida)) {
          Tensor<T>& gx = t.grad_buffer(ida);
          const T inv_n = T{1} / static_cast<T>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            T s1 = 0, s2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
              const T dh = g[r * n + i] * gn[i];
              s1 += dh;
              s2 += dh * (*xhat)[r * n + i];
            }
            for (std::size_t i = 0; i < n; ++i) {
              const T dh = g[r * n + i] * gn[i];
              gx[r * n + i] +=
                  (*rstd)[r] * (dh - inv_n * s1 - (*xhat)[r * n + i] * inv_n * s2);
            }
          }
        }
      });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  if (numel(shape) != a.value().size()) {
    throw DimensionError("cannot reshape " + to_string(a.shape()) + " to " +
                         to_string(shape));
  }
  Tensor<T> out(std::move(shape), a.value().storage());
  const std::size_t ida = a.id();
  return a.tape().record("reshape", std::move(out), {ida},
                         [=](Tape<T>& t, std::size_t self) {
                           const Tensor<T>& g = t.upstream(self);
                           Tensor<T>& gx = t.grad_buffer(ida);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         });
}

template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& perm) {
  const Shape& s = a.shape();
  const std::size_t r = s.size();
  if (perm.size() != r) throw DimensionError("permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (std::size_t p : perm) {
    if (p >= r || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape os(r);
  for (std::size_t i = 0; i < r; ++i) os[i] = s[perm[i]];
  const auto in_strides = strides_of(s);
  // Output axis i walks input axis perm[i].
  std::vector<std::size_t> walk(r);
  for (std::size_t i = 0; i < r; ++i) walk[i] = in_strides[perm[i]];
  // When the last axis stays in place, whole rows move as contiguous runs.
  const std::size_t run = perm.back() == r - 1 ? s.back() : 1;
  const std::size_t walk_axes = run > 1 ? r - 1 : r;
  auto src = std::make_shared<std::vector<std::size_t>>(a.value().size() / std::max<std::size_t>(run, 1));
  if (!src->empty()) {
    std::vector<std::size_t> idx(walk_axes, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < src->size(); ++i) {
      (*src)[i] = off;
      for (std::size_t ax = walk_axes; ax-- > 0;) {
        ++idx[ax];
        off += walk[ax];
        if (idx[ax] < os[ax]) break;
        off -= walk[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  const Tensor<T>& av = a.value();
  Tensor<T> out(os);
  for (std::size_t i = 0; i < src->size(); ++i) {
    std::copy_n(av.ptr() + (*src)[i], run, out.ptr() + i * run);
  }
  const std::size_t ida = a.id();
  return a.tape().record("permute", std::move(out), {ida},
                         [=](Tape<T>& t, std::size_t self) {
                           const Tensor<T>& g = t.upstream(self);
                           Tensor<T>& gx = t.grad_buffer(ida);
                           for (std::size_t i = 0; i < src->size(); ++i) {
                             T* dst = gx.ptr() + (*src)[i];
                             const T* from = g.ptr() + i * run;
                             for (std::size_t j = 0; j < run; ++j) dst[j] += from[j];
                           }
                         });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  const std::size_t r = a.rank();
  if (r < 2) throw DimensionError("transpose needs rank >= 2");
  std::vector<std::size_t> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[r - 1], perm[r - 2]);
  return permute(a, perm);
}

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
  check_axis(axis, a.rank(), "slice");
  const Shape& s = a.shape();
  if (start + len > s[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds axis extent " +
                         std::to_string(s[axis]));
  }
  const AxisSplit sp = split_at(s, axis);
  Shape os = s;
  os[axis] = len;
  Tensor<T> out(os);
  const Tensor<T>& av = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(av.ptr() + (o * sp.n + start) * sp.inner, len * sp.inner,
                out.ptr() + o * len * sp.inner);
  }
  const std::size_t ida = a.id();
  return a.tape().record("slice", std::move(out), {ida},
                         [=](Tape<T>& t, std::size_t self) {
                           const Tensor<T>& g = t.upstream(self);
                           Tensor<T>& gx = t.grad_buffer(ida);
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                             T* dst = gx.ptr() + (o * sp.n + start) * sp.inner;
                             const T* src = g.ptr() + o * len * sp.inner;
                             for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
                           }
                         });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  Tape<T>& tape = parts.front().tape();
  const Shape& s0 = parts.front().shape();
  check_axis(axis, s0.size(), "concat");
  Shape os = s0;
  os[axis] = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var<T>& p : parts) {
    tape_of(parts.front(), p);
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        throw DimensionError("concat: " + to_string(s) + " vs " + to_string(s0));
      }
    }
    os[axis] += s[axis];
    ids.push_back(p.id());
    widths.push_back(s[axis]);
  }
  const AxisSplit sp = split_at(os, axis);
  Tensor<T> out(os);
  std::size_t at = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    const std::size_t w = widths[k] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(v.ptr() + o * w, w, out.ptr() + (o * sp.n) * sp.inner + at);
    }
    at += w;
  }
  return tape.record("concat", std::move(out), ids,
                     [=](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& g = t.upstream(self);
                       std::size_t col = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         const std::size_t w = widths[k] * sp.inner;
                         if (t.requires_grad(ids[k])) {
                           Tensor<T>& gx = t.grad_buffer(ids[k]);
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                             const T* src = g.ptr() + (o * sp.n) * sp.inner + col;
                             T* dst = gx.ptr() + o * w;
                             for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
                           }
                         }
                         col += w;
                       }
                     });
}

template <typename T>
Var<T> expand_front(const Var<T>& a, std::size_t n) {
  const Tensor<T>& av = a.value();
  Shape os{n};
  os.insert(os.end(), av.shape().begin(), av.shape().end());
  Tensor<T> out(os);
  for (std::size_t k = 0; k < n; ++k) std::copy_n(av.ptr(), av.size(), out.ptr() + k * av.size());
  const std::size_t ida = a.id(), m = av.size();
  return a.tape().record("expand_front", std::move(out), {ida},
                         [=](Tape<T>& t, std::size_t self) {
                           const Tensor<T>& g = t.upstream(self);
                           Tensor<T>& gx = t.grad_buffer(ida);
                           for (std::size_t k = 0; k < n; ++k)
                             for (std::size_t i = 0; i < m; ++i) gx[i] += g[k * m + i];
                         });
}

template <typename T>
Var<T> upsample_nearest2d(const Var<T>& a, std::size_t f) {
  const Shape& s = a.shape();
  if (s.size() != 4) throw DimensionError("upsample_nearest2d expects [B,H,W,C]");
  if (f == 0) throw ValueError("upsample factor must be >= 1");
  const std::size_t B = s[0], H = s[1], W = s[2], C = s[3];
  Tensor<T> out(Shape{B, H * f, W * f, C});
  const Tensor<T>& av = a.value();
  auto src_of = [=](std::size_t b, std::size_t y, std::size_t x) {
    return ((b * H + y / f) * W + x / f) * C;
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H * f; ++y)
      for (std::size_t x = 0; x < W * f; ++x)
        std::copy_n(av.ptr() + src_of(b, y, x), C,
                    out.ptr() + ((b * H * f + y) * W * f + x) * C);
  const std::size_t ida = a.id();
  return a.tape().record(
      "upsample_nearest2d", std::move(out), {ida}, [=](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.upstream(self);
        Tensor<T>& gx = t.grad_buffer(ida);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t y = 0; y < H * f; ++y)
            for (std::size_t x = 0; x < W * f; ++x) {
              const T* src = g.ptr() + ((b * H * f + y) * W * f + x) * C;
              T* dst = gx.ptr() + src_of(b, y, x);
              for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
            }
      });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  T total = 0;
  for (T v : av.data()) total += v;
  const std::size_t ida = a.id();
  return a.tape().record("sum", Tensor<T>::scalar(total), {ida},
                         [=](Tape<T>& t, std::size_t self) {
                           const T g = t.upstream(self)[0];
                           Tensor<T>& gx = t.grad_buffer(ida);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
                         });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

template <typename T>
Var<T> sum_axis(const Var<T>& a, std::size_t axis, bool keepdim) {
  check_axis(axis, a.rank(), "sum_axis");
  const AxisSplit sp = split_at(a.shape(), axis);
  Shape os = a.shape();
  if (keepdim) {
    os[axis] = 1;
  } else {
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  Tensor<T> out(os);
  const Tensor<T>& av = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t in = 0; in < sp.inner; ++in)
        out[o * sp.inner + in] += av[(o * sp.n + k) * sp.inner + in];
  const std::size_t ida = a.id();
  return a.tape().record("sum_axis", std::move(out), {ida},
                         [=](Tape<T>& t, std::size_t self) {
                           const Tensor<T>& g = t.upstream(self);
                           Tensor<T>& gx = t.grad_buffer(ida);
                           for (std::size_t o = 0; o < sp.outer; ++o)
                             for (std::size_t k = 0; k < sp.n; ++k)
                               for (std::size_t in = 0; in < sp.inner; ++in)
                                 gx[(o * sp.n + k) * sp.inner + in] += g[o * sp.inner + in];
                         });
}

template <typename T>
Var<T> mean_axis(const Var<T>& a, std::size_t axis, bool keepdim) {
  check_axis(axis, a.rank(), "mean_axis");
  return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.dim(axis)));
}

#define WWT_INSTANTIATE_OPS(T)                                                       \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                              \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                           \
  template Var<T> matmul_tn(const Var<T>&, const Var<T>&);                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                 \
  template Var<T> div(const Var<T>&, const Var<T>&);                                 \
  template Var<T> minimum(const Var<T>&, const Var<T>&);                             \
  template Var<T> maximum(const Var<T>&, const Var<T>&);                             \
  template Var<T> scale(const Var<T>&, double);                                      \
  template Var<T> add_scalar(const Var<T>&, double);                                 \
  template Var<T> pointwise(const Var<T>&, Pointwise);                               \
  template Var<T> exp(const Var<T>&);                                                \
  template Var<T> log(const Var<T>&);                                                \
  template Var<T> abs(const Var<T>&);                                                \
  template Var<T> square(const Var<T>&);                                             \
  template Var<T> softmax_along(const Var<T>&, std::size_t, double);                 \
  template Var<T> log_softmax_along(const Var<T>&, std::size_t);                     \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);   \
  template Var<T> reshape(const Var<T>&, Shape);                                     \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);           \
  template Var<T> transpose(const Var<T>&);                                          \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);       \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                   \
  template Var<T> expand_front(const Var<T>&, std::size_t);                          \
  template Var<T> upsample_nearest2d(const Var<T>&, std::size_t);                    \
  template Var<T> sum(const Var<T>&);                                                \
  template Var<T> mean(const Var<T>&);                                               \
  template Var<T> sum_axis(const Var<T>&, std::size_t, bool);                        \
  template Var<T> mean_axis(const Var<T>&, std::size_t, bool);                       \
  template Tensor<T> softmax_values(const Tensor<T>&, std::size_t, double);

WWT_INSTANTIATE_OPS(float)
WWT_INSTANTIATE_OPS(double)

}  // namespace wwt::ad
