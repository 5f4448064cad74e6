// Copyright 2026 The p2d Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable primitives. Every op computes its forward value eagerly and,
// when any input tracks gradients, records a closure that accumulates into the
// parents' gradients.

#ifndef P2D_AD_OPS_HPP_
#define P2D_AD_OPS_HPP_

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

#include "p2d/ad/tensor.hpp"
#include "p2d/interp.hpp"

namespace p2d::ad {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
std::vector<T>* grad_sink(Node<T>& n, std::size_t i) {
  auto& p = *n.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

/// Right-aligned (numpy-style) broadcasting of two shapes.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_stride, b_stride;
  bool same = false;
};

inline Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t r = std::max(a.size(), b.size());
  bc.out.assign(r, 1);
  bc.a_stride.assign(r, 0);
  bc.b_stride.assign(r, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t i = r - 1 - k;
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      shape_fail(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    bc.out[i] = std::max(da, db);
    bc.a_stride[i] = da == 1 ? 0 : sa;
    bc.b_stride[i] = db == 1 ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  return bc;
}

/// Calls f(out_index, a_index, b_index) over the broadcast output.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t n = numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = bc.out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += bc.a_stride[d];
      ib += bc.b_stride[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.a_stride[d] * bc.out[d];
      ib -= bc.b_stride[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

/// Splits a shape around `axis` into (outer, axis length, inner).
inline std::array<std::size_t, 3> split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    shape_fail(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

inline void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto bc = detail::broadcast("add", a.shape(), b.shape());
  std::vector<T> out(numel(bc.out));
  const auto av = a.data(), bv = b.data();
  detail::for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = av[ia] + bv[ib];
  });
  return make_result<T>("add", bc.out, std::move(out), {&a, &b}, [bc](Node<T>& n) {
    auto* ga = detail::grad_sink(n, 0);
    auto* gb = detail::grad_sink(n, 1);
    detail::for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) (*ga)[ia] += n.grad[i];
      if (gb) (*gb)[ib] += n.grad[i];
    });
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto bc = detail::broadcast("sub", a.shape(), b.shape());
  std::vector<T> out(numel(bc.out));
  const auto av = a.data(), bv = b.data();
  detail::for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = av[ia] - bv[ib];
  });
  return make_result<T>("sub", bc.out, std::move(out), {&a, &b}, [bc](Node<T>& n) {
    auto* ga = detail::grad_sink(n, 0);
    auto* gb = detail::grad_sink(n, 1);
    detail::for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) (*ga)[ia] += n.grad[i];
      if (gb) (*gb)[ib] -= n.grad[i];
    });
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto bc = detail::broadcast("mul", a.shape(), b.shape());
  std::vector<T> out(numel(bc.out));
  const auto av = a.data(), bv = b.data();
  detail::for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = av[ia] * bv[ib];
  });
  return make_result<T>("mul", bc.out, std::move(out), {&a, &b}, [bc](Node<T>& n) {
    auto* ga = detail::grad_sink(n, 0);
    auto* gb = detail::grad_sink(n, 1);
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    detail::for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) (*ga)[ia] += n.grad[i] * bv[ib];
      if (gb) (*gb)[ib] += n.grad[i] * av[ia];
    });
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  const auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return make_result<T>("scale", a.shape(), std::move(out), {&a}, [s](Node<T>& n) {
    if (auto* g = detail::grad_sink(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * s;
    }
  });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  const auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s;
  return make_result<T>("add_scalar", a.shape(), std::move(out), {&a}, [](Node<T>& n) {
    if (auto* g = detail::grad_sink(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
  });
}

/// Shared body for pointwise unary ops; `df` maps (input, output) to the
/// local derivative.
template <typename T, typename F, typename DF>
BasicTensor<T> unary(const char* op, const BasicTensor<T>& a, F f, DF df) {
  std::vector<T> out(a.numel());
  const auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_result<T>(op, a.shape(), std::move(out), {&a}, [df](Node<T>& n) {
    if (auto* g = detail::grad_sink(n, 0)) {
      const auto& x = n.parents[0]->value;
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * df(x[i], n.value[i]);
    }
  });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& a) {
  return unary(
      "abs", a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  return unary(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

/// Exact (erf-based) GELU.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
  return unary(
      "gelu", a,
      [](T x) { return T(0.5) * x * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2))); },
      [](T x, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2)));
        const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi *
                                                     std::numbers::sqrt2);
        return cdf + x * pdf;
      });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return make_result<T>("sum", Shape{}, std::vector<T>{s}, {&a}, [](Node<T>& n) {
    if (auto* g = detail::grad_sink(n, 0)) {
      for (auto& v : *g) v += n.grad[0];
    }
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_result<T>("mean", Shape{}, std::vector<T>{s * inv}, {&a}, [inv](Node<T>& n) {
    if (auto* g = detail::grad_sink(n, 0)) {
      for (auto& v : *g) v += n.grad[0] * inv;
    }
  });
}

/// Mean along one axis; the axis is removed from the shape.
template <typename T>
BasicTensor<T> mean_axis(const BasicTensor<T>& a, std::size_t axis) {
  const auto [outer, len, inner] = detail::split_axis("mean_axis", a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(outer * inner, T(0));
  const auto av = a.data();
  const T inv = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * len + k) * inner + i];
  for (auto& v : out) v *= inv;
  return make_result<T>("mean_axis", shape, std::move(out), {&a},
                        [outer, len, inner, inv](Node<T>& n) {
                          auto* g = detail::grad_sink(n, 0);
                          if (!g) return;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t k = 0; k < len; ++k)
                              for (std::size_t i = 0; i < inner; ++i)
                                (*g)[(o * len + k) * inner + i] += n.grad[o * inner + i] * inv;
                        });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<T> out(m * p);
  detail::MapMat<T>(out.data(), m, p).noalias() =
      detail::CMapMat<T>(a.data().data(), m, k) * detail::CMapMat<T>(b.data().data(), k, p);
  return make_result<T>("matmul", Shape{m, p}, std::move(out), {&a, &b}, [m, k, p](Node<T>& n) {
    detail::CMapMat<T> dy(n.grad.data(), m, p);
    if (auto* ga = detail::grad_sink(n, 0)) {
      detail::MapMat<T>(ga->data(), m, k).noalias() +=
          dy * detail::CMapMat<T>(n.parents[1]->value.data(), k, p).transpose();
    }
    if (auto* gb = detail::grad_sink(n, 1)) {
      detail::MapMat<T>(gb->data(), k, p).noalias() +=
          detail::CMapMat<T>(n.parents[0]->value.data(), m, k).transpose() * dy;
    }
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    shape_fail("reshape", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return make_result<T>("reshape", std::move(shape), a.values(), {&a}, [](Node<T>& n) {
    if (auto* g = detail::grad_sink(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
  });
}

/// General axis permutation: output axis i is input axis dims[i].
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& a, const std::vector<std::size_t>& dims) {
  const auto& in = a.shape();
  const std::size_t r = in.size();
  std::vector<bool> used(r, false);
  if (dims.size() != r) shape_fail("permute", "axis list does not match " + shape_str(in));
  for (auto d : dims) {
    if (d >= r || used[d]) shape_fail("permute", "invalid axis list for " + shape_str(in));
    used[d] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[dims[i]];
    src_stride[i] = in_stride[dims[i]];
  }
  // gather[i] = input offset of output element i
  const std::size_t n = a.numel();
  auto gather = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*gather)[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      off -= src_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  std::vector<T> out(n);
  const auto av = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[(*gather)[i]];
  return make_result<T>("permute", out_shape, std::move(out), {&a}, [gather](Node<T>& nd) {
    if (auto* g = detail::grad_sink(nd, 0)) {
      for (std::size_t i = 0; i < nd.grad.size(); ++i) (*g)[(*gather)[i]] += nd.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  detail::require_rank("transpose", a.shape(), 2);
  return permute(a, {1, 0});
}

/// Half-open range [begin, end) along `axis`.
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& a, std::size_t axis, std::size_t begin,
                     std::size_t end) {
  const auto [outer, len, inner] = detail::split_axis("slice", a.shape(), axis);
  if (begin >= end || end > len) {
    shape_fail("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") invalid for axis " + std::to_string(axis) + " of " +
                            shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  Shape shape = a.shape();
  shape[axis] = w;
  std::vector<T> out(outer * w * inner);
  const auto av = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), w * inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * w * inner));
  return make_result<T>("slice", shape, std::move(out), {&a},
                        [outer, len, inner, begin, w](Node<T>& n) {
                          auto* g = detail::grad_sink(n, 0);
                          if (!g) return;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t i = 0; i < w * inner; ++i)
                              (*g)[(o * len + begin) * inner + i] += n.grad[o * w * inner + i];
                        });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& first = parts.front().shape();
  const auto [outer, len0, inner] = detail::split_axis("concat", first, axis);
  (void)len0;
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) shape_fail("concat", "rank mismatch " + shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        shape_fail("concat", "shape " + shape_str(s) + " incompatible with " + shape_str(first));
      }
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape shape = first;
  shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t base = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * lens[k] * inner), lens[k] * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + base) * inner));
    base += lens[k];
  }
  return make_result_n<T>("concat", shape, std::move(out), parts,
                          [outer = outer, inner = inner, total, lens](Node<T>& n) {
                            std::size_t base = 0;
                            for (std::size_t k = 0; k < lens.size(); ++k) {
                              if (auto* g = detail::grad_sink(n, k)) {
                                for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t i = 0; i < lens[k] * inner; ++i)
                                    (*g)[o * lens[k] * inner + i] +=
                                        n.grad[(o * total + base) * inner + i];
                              }
                              base += lens[k];
                            }
                          });
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& a, std::size_t axis) {
  const auto [outer, len, inner] = detail::split_axis("softmax", a.shape(), axis);
  std::vector<T> out(a.numel());
  const auto av = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mx = av[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, av[base + k * inner]);
      T s = T(0);
      for (std::size_t k = 0; k < len; ++k) {
        out[base + k * inner] = std::exp(av[base + k * inner] - mx);
        s += out[base + k * inner];
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= s;
    }
  }
  return make_result<T>("softmax", a.shape(), std::move(out), {&a},
                        [outer, len, inner](Node<T>& n) {
                          auto* g = detail::grad_sink(n, 0);
                          if (!g) return;
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t i = 0; i < inner; ++i) {
                              const std::size_t base = o * len * inner + i;
                              T dot = T(0);
                              for (std::size_t k = 0; k < len; ++k)
                                dot += n.grad[base + k * inner] * n.value[base + k * inner];
                              for (std::size_t k = 0; k < len; ++k) {
                                const std::size_t j = base + k * inner;
                                (*g)[j] += n.value[j] * (n.grad[j] - dot);
                              }
                            }
                          }
                        });
}

/// Zero-mean, unit-variance normalization along `axis` (no affine terms;
/// compose with mul/add for gain and bias).
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& a, std::size_t axis, T eps = T(1e-5)) {
  const auto [outer, len, inner] = detail::split_axis("layer_norm", a.shape(), axis);
  std::vector<T> out(a.numel());
  auto inv_std = std::make_shared<std::vector<T>>(outer * inner);
  const auto av = a.data();
  const T inv_len = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mu = T(0);
      for (std::size_t k = 0; k < len; ++k) mu += av[base + k * inner];
      mu *= inv_len;
      T var = T(0);
      for (std::size_t k = 0; k < len; ++k) {
        const T d = av[base + k * inner] - mu;
        var += d * d;
      }
      var *= inv_len;
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[o * inner + i] = is;
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] = (av[base + k * inner] - mu) * is;
    }
  }
  return make_result<T>(
      "layer_norm", a.shape(), std::move(out), {&a},
      [outer, len, inner, inv_std, inv_len](Node<T>& n) {
        auto* g = detail::grad_sink(n, 0);
        if (!g) return;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            T mg = T(0), mgy = T(0);
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t j = base + k * inner;
              mg += n.grad[j];
              mgy += n.grad[j] * n.value[j];
            }
            mg *= inv_len;
            mgy *= inv_len;
            const T is = (*inv_std)[o * inner + i];
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t j = base + k * inner;
              (*g)[j] += is * (n.grad[j] - mg - n.value[j] * mgy);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Spatial ops on [C, H, W] maps

enum class PadMode { kZeros, kReplicate };

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
  PadMode pad_mode = PadMode::kZeros;
};

/// 2-D cross-correlation of x[C,H,W] with w[O,C,kh,kw] plus optional bias[O].
/// Implemented as im2col followed by a GEMM.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      const BasicTensor<T>* bias, Conv2dOptions opt = {}) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0)) {
    shape_fail("conv2d", "input " + shape_str(x.shape()) + " incompatible with weight " +
                             shape_str(w.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != w.dim(0))) {
    shape_fail("conv2d", "bias " + shape_str(bias->shape()) + " does not match weight " +
                             shape_str(w.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t s = opt.stride, pad = opt.pad;
  if (s == 0 || h + 2 * pad < kh || wd + 2 * pad < kw) {
    shape_fail("conv2d", "kernel " + shape_str(w.shape()) + " larger than padded input " +
                             shape_str(x.shape()));
  }
  const std::size_t oh = (h + 2 * pad - kh) / s + 1, ow = (wd + 2 * pad - kw) / s + 1;
  const std::size_t ckk = c * kh * kw, np = oh * ow;
  const bool pointwise = kh == 1 && kw == 1 && s == 1 && pad == 0;
  const bool replicate = opt.pad_mode == PadMode::kReplicate;

  // src[r * np + p] = flat input index feeding column r at output position p,
  // or npos for a zero pad.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  auto src = std::make_shared<std::vector<std::size_t>>();
  auto cols = std::make_shared<std::vector<T>>();
  const auto xv = x.data();
  if (!pointwise) {
    src->resize(ckk * np);
    cols->resize(ckk * np);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ki = 0; ki < kh; ++ki)
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const std::size_t row = (ci * kh + ki) * kw + kj;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            auto iy = static_cast<std::ptrdiff_t>(oy * s + ki) - static_cast<std::ptrdiff_t>(pad);
            bool oob_y = iy < 0 || iy >= static_cast<std::ptrdiff_t>(h);
            if (replicate) iy = std::clamp<std::ptrdiff_t>(iy, 0, static_cast<std::ptrdiff_t>(h) - 1);
            for (std::size_t ox = 0; ox < ow; ++ox) {
              auto ix =
                  static_cast<std::ptrdiff_t>(ox * s + kj) - static_cast<std::ptrdiff_t>(pad);
              bool oob = oob_y || ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd);
              if (replicate) {
                ix = std::clamp<std::ptrdiff_t>(ix, 0, static_cast<std::ptrdiff_t>(wd) - 1);
                oob = false;
              }
              const std::size_t k = row * np + oy * ow + ox;
              if (oob) {
                (*src)[k] = npos;
                (*cols)[k] = T(0);
              } else {
                const std::size_t at = (ci * h + static_cast<std::size_t>(iy)) * wd +
                                       static_cast<std::size_t>(ix);
                (*src)[k] = at;
                (*cols)[k] = xv[at];
              }
            }
          }
        }
  }
  const T* col_ptr = pointwise ? xv.data() : cols->data();

  std::vector<T> out(oc * np);
  detail::MapMat<T> om(out.data(), oc, np);
  om.noalias() = detail::CMapMat<T>(w.data().data(), oc, ckk) * detail::CMapMat<T>(col_ptr, ckk, np);
  if (bias) {
    const auto bv = bias->data();
    for (std::size_t o = 0; o < oc; ++o) om.row(o).array() += bv[o];
  }

  auto backward_fn = [oc, ckk, np, pointwise, src, cols, has_bias = bias != nullptr](Node<T>& n) {
    detail::CMapMat<T> dy(n.grad.data(), oc, np);
    const auto& xval = n.parents[0]->value;
    const T* cp = pointwise ? xval.data() : cols->data();
    if (auto* gw = detail::grad_sink(n, 1)) {
      detail::MapMat<T>(gw->data(), oc, ckk).noalias() +=
          dy * detail::CMapMat<T>(cp, ckk, np).transpose();
    }
    if (has_bias) {
      if (auto* gb = detail::grad_sink(n, 2)) {
        // Fixed summation order: Eigen's vectorized sum peels by address
        // alignment, which would make results vary between allocations.
        for (std::size_t o = 0; o < oc; ++o) {
          const T* row = n.grad.data() + o * np;
          T acc = T(0);
          for (std::size_t p = 0; p < np; ++p) acc += row[p];
          (*gb)[o] += acc;
        }
      }
    }
    if (auto* gx = detail::grad_sink(n, 0)) {
      const auto& wv = n.parents[1]->value;
      if (pointwise) {
        detail::MapMat<T>(gx->data(), ckk, np).noalias() +=
            detail::CMapMat<T>(wv.data(), oc, ckk).transpose() * dy;
      } else {
        detail::RowMat<T> dcols = detail::CMapMat<T>(wv.data(), oc, ckk).transpose() * dy;
        const T* dc = dcols.data();
        for (std::size_t k = 0; k < ckk * np; ++k) {
          const std::size_t at = (*src)[k];
          if (at != npos) (*gx)[at] += dc[k];
        }
      }
    }
  };
  if (bias) {
    return make_result<T>("conv2d", Shape{oc, oh, ow}, std::move(out), {&x, &w, bias},
                          std::move(backward_fn));
  }
  return make_result<T>("conv2d", Shape{oc, oh, ow}, std::move(out), {&x, &w},
                        std::move(backward_fn));
}

/// Bilinear resize of x[C,H,W] with the project-wide sampling convention
/// (see linear_taps).
template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, std::size_t out_h, std::size_t out_w) {
  detail::require_rank("bilinear_resize", x.shape(), 3);
  if (out_h == 0 || out_w == 0) shape_fail("bilinear_resize", "output dims must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto ty = std::make_shared<std::vector<LinearTap<T>>>(linear_taps<T>(h, out_h));
  auto tx = std::make_shared<std::vector<LinearTap<T>>>(linear_taps<T>(w, out_w));
  std::vector<T> out(c * out_h * out_w);
  const auto xv = x.data();
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* p = xv.data() + ci * h * w;
    for (std::size_t r = 0; r < out_h; ++r) {
      const auto& y = (*ty)[r];
      for (std::size_t q = 0; q < out_w; ++q) {
        const auto& t = (*tx)[q];
        out[(ci * out_h + r) * out_w + q] =
            bilerp(p[y.lo * w + t.lo], p[y.lo * w + t.hi], p[y.hi * w + t.lo], p[y.hi * w + t.hi],
                   y.frac, t.frac);
      }
    }
  }
  return make_result<T>(
      "bilinear_resize", Shape{c, out_h, out_w}, std::move(out), {&x},
      [c, h, w, out_h, out_w, ty, tx](Node<T>& n) {
        auto* g = detail::grad_sink(n, 0);
        if (!g) return;
        for (std::size_t ci = 0; ci < c; ++ci) {
          T* gp = g->data() + ci * h * w;
          for (std::size_t r = 0; r < out_h; ++r) {
            const auto& y = (*ty)[r];
            for (std::size_t q = 0; q < out_w; ++q) {
              const auto& t = (*tx)[q];
              const T d = n.grad[(ci * out_h + r) * out_w + q];
              gp[y.lo * w + t.lo] += d * (T(1) - y.frac) * (T(1) - t.frac);
              gp[y.lo * w + t.hi] += d * (T(1) - y.frac) * t.frac;
              gp[y.hi * w + t.lo] += d * y.frac * (T(1) - t.frac);
              gp[y.hi * w + t.hi] += d * y.frac * t.frac;
            }
          }
        }
      });
}

/// Non-overlapping k x k mean pooling of x[C,H,W]; H and W must divide by k.
template <typename T>
BasicTensor<T> avg_pool(const BasicTensor<T>& x, std::size_t k) {
  detail::require_rank("avg_pool", x.shape(), 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k == 0 || h % k != 0 || w % k != 0) {
    shape_fail("avg_pool", "window " + std::to_string(k) + " does not divide " +
                               shape_str(x.shape()));
  }
  const std::size_t oh = h / k, ow = w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  std::vector<T> out(c * oh * ow, T(0));
  const auto xv = x.data();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < w; ++q)
        out[(ci * oh + r / k) * ow + q / k] += xv[(ci * h + r) * w + q] * inv;
  return make_result<T>("avg_pool", Shape{c, oh, ow}, std::move(out), {&x},
                        [c, h, w, k, oh, ow, inv](Node<T>& n) {
                          auto* g = detail::grad_sink(n, 0);
                          if (!g) return;
                          for (std::size_t ci = 0; ci < c; ++ci)
                            for (std::size_t r = 0; r < h; ++r)
                              for (std::size_t q = 0; q < w; ++q)
                                (*g)[(ci * h + r) * w + q] +=
                                    n.grad[(ci * oh + r / k) * ow + q / k] * inv;
                        });
}

// ---------------------------------------------------------------------------
// Precision conversion (gradient checks run composite blocks in 64-bit).

template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& a, bool requires_grad = false) {
  std::vector<To> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<To>(a.data()[i]);
  return BasicTensor<To>(a.shape(), std::move(v), requires_grad);
}

}  // namespace p2d::ad

#endif  // P2D_AD_OPS_HPP_
