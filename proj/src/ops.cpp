/* Copyright 2026 The fusionseg Authors. All Rights Reserved.

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
#include "fseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "fseg/errors.hpp"

namespace fseg::ops {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  FSEG_CHECK(a.shape() == b.shape(), ErrorKind::kShapeMismatch,
             std::string(op) + ": " + ShapeString(a.shape()) + " vs " +
                 ShapeString(b.shape()));
}

void RequireRank(const Tensor& a, int rank, const char* op) {
  FSEG_CHECK(a.rank() == rank, ErrorKind::kShapeMismatch,
             std::string(op) + ": expected rank " + std::to_string(rank) +
                 ", got " + ShapeString(a.shape()));
}

// Applies f elementwise and records df/da for a unary op.
template <typename F, typename D>
Tensor Unary(const Tensor& a, F f, D dfda) {
  const int64_t n = a.numel();
  Buffer out(n);
  const float* x = a.data();
  for (int64_t i = 0; i < n; ++i) out[i] = f(x[i]);
  auto ai = a.impl();
  return MakeResult(a.shape(), std::move(out), {a},
                    [ai, dfda](const TensorImpl& o) {
                      float* ga = GradTarget(ai);
                      if (!ga) return;
                      const int64_t n = static_cast<int64_t>(o.data.size());
                      for (int64_t i = 0; i < n; ++i) {
                        ga[i] += o.grad[i] * dfda(ai->data[i], o.data[i]);
                      }
                    });
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Add");
  Buffer out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.at(i) + b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return MakeResult(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    const size_t n = o.grad.size();
    if (float* g = GradTarget(ai)) for (size_t i = 0; i < n; ++i) g[i] += o.grad[i];
    if (float* g = GradTarget(bi)) for (size_t i = 0; i < n; ++i) g[i] += o.grad[i];
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Sub");
  Buffer out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.at(i) - b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return MakeResult(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    const size_t n = o.grad.size();
    if (float* g = GradTarget(ai)) for (size_t i = 0; i < n; ++i) g[i] += o.grad[i];
    if (float* g = GradTarget(bi)) for (size_t i = 0; i < n; ++i) g[i] -= o.grad[i];
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Mul");
  Buffer out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.at(i) * b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return MakeResult(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    const size_t n = o.grad.size();
    if (float* g = GradTarget(ai))
      for (size_t i = 0; i < n; ++i) g[i] += o.grad[i] * bi->data[i];
    if (float* g = GradTarget(bi))
      for (size_t i = 0; i < n; ++i) g[i] += o.grad[i] * ai->data[i];
  });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Div");
  Buffer out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.at(i) / b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return MakeResult(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    const size_t n = o.grad.size();
    if (float* g = GradTarget(ai))
      for (size_t i = 0; i < n; ++i) g[i] += o.grad[i] / bi->data[i];
    if (float* g = GradTarget(bi))
      for (size_t i = 0; i < n; ++i) g[i] -= o.grad[i] * o.data[i] / bi->data[i];
  });
}

Tensor Scale(const Tensor& a, float s) {
  return Unary(a, [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Tensor AddScalar(const Tensor& a, float s) {
  return Unary(a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Tensor Square(const Tensor& a) {
  return Unary(a, [](float x) { return x * x; },
               [](float x, float) { return 2.0f * x; });
}

Tensor Relu(const Tensor& a) {
  return Unary(a, [](float x) { return x > 0.0f ? x : 0.0f; },
               [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor LeakyRelu(const Tensor& a, float slope) {
  return Unary(a, [slope](float x) { return x > 0.0f ? x : slope * x; },
               [slope](float x, float) { return x > 0.0f ? 1.0f : slope; });
}

Tensor Gelu(const Tensor& a) {
  constexpr float kInvSqrt2 = 0.70710678118654752f;
  constexpr float kInvSqrt2Pi = 0.39894228040143268f;
  return Unary(
      a, [](float x) { return 0.5f * x * (1.0f + std::erf(x * kInvSqrt2)); },
      [](float x, float) {
        return 0.5f * (1.0f + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(-0.5f * x * x);
      });
}

Tensor Sigmoid(const Tensor& a) {
  return Unary(a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
               [](float, float y) { return y * (1.0f - y); });
}

Tensor Sum(const Tensor& a) {
  double s = 0.0;
  for (float v : a.values()) s += v;
  auto ai = a.impl();
  return MakeResult({1}, {static_cast<float>(s)}, {a}, [ai](const TensorImpl& o) {
    float* g = GradTarget(ai);
    if (!g) return;
    const float go = o.grad[0];
    for (size_t i = 0; i < ai->data.size(); ++i) g[i] += go;
  });
}

Tensor Mean(const Tensor& a) {
  FSEG_CHECK(a.numel() > 0, ErrorKind::kShapeMismatch, "Mean of empty tensor");
  double s = 0.0;
  for (float v : a.values()) s += v;
  const double n = static_cast<double>(a.numel());
  auto ai = a.impl();
  return MakeResult({1}, {static_cast<float>(s / n)}, {a}, [ai, n](const TensorImpl& o) {
    float* g = GradTarget(ai);
    if (!g) return;
    const float go = static_cast<float>(o.grad[0] / n);
    for (size_t i = 0; i < ai->data.size(); ++i) g[i] += go;
  });
}

Tensor Reshape(const Tensor& a, Shape shape) {
  FSEG_CHECK(NumElements(shape) == a.numel(), ErrorKind::kShapeMismatch,
             "Reshape " + ShapeString(a.shape()) + " -> " + ShapeString(shape));
  auto ai = a.impl();
  return MakeResult(std::move(shape), a.vec(), {a}, [ai](const TensorImpl& o) {
    float* g = GradTarget(ai);
    if (!g) return;
    for (size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

namespace {

// dst[j] = src[permuted index]. Shapes are left-padded to rank 4 so the
// copy is four nested loops with a strided innermost read.
void PermuteCopy(const float* src, const Shape& in_shape, const std::vector<int>& axes,
                 float* dst, bool accumulate) {
  const int r = static_cast<int>(in_shape.size());
  const int pad = 4 - r;
  std::array<int64_t, 4> in_stride{};
  int64_t st = 1;
  for (int i = r - 1; i >= 0; --i) {
    in_stride[pad + i] = st;
    st *= in_shape[i];
  }
  std::array<int64_t, 4> dims{1, 1, 1, 1}, strides{0, 0, 0, 0};
  for (int i = 0; i < r; ++i) {
    dims[pad + i] = in_shape[axes[i]];
    strides[pad + i] = in_stride[pad + axes[i]];
  }
  int64_t j = 0;
  for (int64_t a = 0; a < dims[0]; ++a) {
    for (int64_t b = 0; b < dims[1]; ++b) {
      for (int64_t c = 0; c < dims[2]; ++c) {
        const float* base = src + a * strides[0] + b * strides[1] + c * strides[2];
        const int64_t s3 = strides[3];
        if (accumulate) {
          for (int64_t d = 0; d < dims[3]; ++d) dst[j++] += base[d * s3];
        } else {
          for (int64_t d = 0; d < dims[3]; ++d) dst[j++] = base[d * s3];
        }
      }
    }
  }
}

}  // namespace

Tensor Permute(const Tensor& a, const std::vector<int>& axes) {
  const int r = a.rank();
  FSEG_CHECK(static_cast<int>(axes.size()) == r, ErrorKind::kShapeMismatch,
             "Permute: axis count mismatch");
  FSEG_CHECK(r <= 4, ErrorKind::kShapeMismatch, "Permute: rank above 4");
  Shape out_shape(r);
  std::vector<int> inverse(r);
  std::vector<bool> used(r, false);
  for (int i = 0; i < r; ++i) {
    FSEG_CHECK(axes[i] >= 0 && axes[i] < r && !used[axes[i]],
               ErrorKind::kShapeMismatch, "Permute: invalid axes");
    used[axes[i]] = true;
    out_shape[i] = a.shape()[axes[i]];
    inverse[axes[i]] = i;
  }
  Buffer out(a.numel());
  PermuteCopy(a.data(), a.shape(), axes, out.data(), false);
  auto ai = a.impl();
  Shape grad_shape = out_shape;
  return MakeResult(std::move(out_shape), std::move(out), {a},
                    [ai, grad_shape, inverse](const TensorImpl& o) {
                      float* g = GradTarget(ai);
                      if (!g) return;
                      PermuteCopy(o.grad.data(), grad_shape, inverse, g, true);
                    });
}

Tensor Concat(const std::vector<Tensor>& parts, int axis) {
  FSEG_CHECK(!parts.empty(), ErrorKind::kShapeMismatch, "Concat of nothing");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  FSEG_CHECK(axis >= 0 && axis < r, ErrorKind::kShapeMismatch, "Concat axis");
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    FSEG_CHECK(p.rank() == r, ErrorKind::kShapeMismatch, "Concat rank mismatch");
    for (int d = 0; d < r; ++d) {
      FSEG_CHECK(d == axis || p.shape()[d] == parts[0].shape()[d],
                 ErrorKind::kShapeMismatch,
                 "Concat: " + ShapeString(p.shape()) + " vs " +
                     ShapeString(parts[0].shape()));
    }
    out_shape[axis] += p.shape()[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  for (int d = axis + 1; d < r; ++d) inner *= out_shape[d];
  const int64_t out_row = static_cast<int64_t>(out_shape[axis]) * inner;
  Buffer out(NumElements(out_shape));
  std::vector<int64_t> col_offset;
  int64_t col = 0;
  for (const auto& p : parts) {
    col_offset.push_back(col);
    const int64_t row = static_cast<int64_t>(p.shape()[axis]) * inner;
    for (int64_t o = 0; o < outer; ++o) {
      std::copy_n(p.data() + o * row, row, out.data() + o * out_row + col);
    }
    col += row;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return MakeResult(
      std::move(out_shape), std::move(out), parts,
      [impls, col_offset, outer, out_row, inner, axis](const TensorImpl& o) {
        for (size_t k = 0; k < impls.size(); ++k) {
          float* g = GradTarget(impls[k]);
          if (!g) continue;
          const int64_t row = static_cast<int64_t>(impls[k]->shape[axis]) * inner;
          for (int64_t r = 0; r < outer; ++r) {
            const float* src = o.grad.data() + r * out_row + col_offset[k];
            float* dst = g + r * row;
            for (int64_t i = 0; i < row; ++i) dst[i] += src[i];
          }
        }
      });
}

Tensor Narrow(const Tensor& a, int axis, int start, int length) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  FSEG_CHECK(axis >= 0 && axis < r && start >= 0 && length >= 0 &&
                 start + length <= a.shape()[axis],
             ErrorKind::kShapeMismatch, "Narrow out of range");
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (int d = axis + 1; d < r; ++d) inner *= a.shape()[d];
  const int64_t in_row = static_cast<int64_t>(a.shape()[axis]) * inner;
  const int64_t row = static_cast<int64_t>(length) * inner;
  const int64_t off = static_cast<int64_t>(start) * inner;
  Buffer out(outer * row);
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.data() + o * in_row + off, row, out.data() + o * row);
  }
  auto ai = a.impl();
  return MakeResult(std::move(out_shape), std::move(out), {a},
                    [ai, outer, in_row, row, off](const TensorImpl& o) {
                      float* g = GradTarget(ai);
                      if (!g) return;
                      for (int64_t r = 0; r < outer; ++r) {
                        for (int64_t i = 0; i < row; ++i) {
                          g[r * in_row + off + i] += o.grad[r * row + i];
                        }
                      }
                    });
}

namespace {

constexpr int64_t kTileFloats = 1 << 15;

struct ConvGeometry {
  int n, cin, h, w, cout, k, oh, ow, groups, cin_g, cout_g;
  ConvOptions opt;
  int64_t col_rows() const { return static_cast<int64_t>(cin_g) * k * k; }
  int64_t out_hw() const { return static_cast<int64_t>(oh) * ow; }
  bool pointwise() const {
    return k == 1 && opt.stride == 1 && opt.padding == 0 && groups == 1;
  }
};

// Output columns [lo, hi) whose input column ox*s - p + off lies inside [0, w).
std::pair<int, int> ValidRange(int ow, int w, int s, int p, int off) {
  const int shift = off - p;
  int lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  int hi = w - 1 - shift < 0 ? 0 : (w - 1 - shift) / s + 1;
  hi = std::min(hi, ow);
  lo = std::min(lo, hi);
  return {lo, hi};
}

// col[(c*k + i)*k + j][(oy - oy0)*ow + ox] for channels [c0, c0 + cin_g) of image x
// and output rows [oy0, oy1).
void Im2Col(const float* x, const ConvGeometry& g, int c0, int oy0, int oy1, float* col) {
  const int s = g.opt.stride, p = g.opt.padding, d = g.opt.dilation;
  const int64_t cols = static_cast<int64_t>(oy1 - oy0) * g.ow;
  for (int c = 0; c < g.cin_g; ++c) {
    const float* plane = x + static_cast<int64_t>(c0 + c) * g.h * g.w;
    for (int i = 0; i < g.k; ++i) {
      for (int j = 0; j < g.k; ++j) {
        float* dst = col + ((static_cast<int64_t>(c) * g.k + i) * g.k + j) * cols;
        const auto [lo, hi] = ValidRange(g.ow, g.w, s, p, j * d);
        const int shift = j * d - p;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * s - p + i * d;
          float* row = dst + static_cast<int64_t>(oy - oy0) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(row, g.ow, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<int64_t>(iy) * g.w + shift;
          std::fill(row, row + lo, 0.0f);
          if (s == 1) {
            std::copy(src + lo, src + hi, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = src[ox * s];
          }
          std::fill(row + hi, row + g.ow, 0.0f);
        }
      }
    }
  }
}

void Col2Im(const float* col, const ConvGeometry& g, int c0, int oy0, int oy1, float* dx) {
  const int s = g.opt.stride, p = g.opt.padding, d = g.opt.dilation;
  const int64_t cols = static_cast<int64_t>(oy1 - oy0) * g.ow;
  for (int c = 0; c < g.cin_g; ++c) {
    float* plane = dx + static_cast<int64_t>(c0 + c) * g.h * g.w;
    for (int i = 0; i < g.k; ++i) {
      for (int j = 0; j < g.k; ++j) {
        const float* src = col + ((static_cast<int64_t>(c) * g.k + i) * g.k + j) * cols;
        const auto [lo, hi] = ValidRange(g.ow, g.w, s, p, j * d);
        const int shift = j * d - p;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * s - p + i * d;
          if (iy < 0 || iy >= g.h) continue;
          float* row = plane + static_cast<int64_t>(iy) * g.w + shift;
          const float* srow = src + static_cast<int64_t>(oy - oy0) * g.ow;
          if (s == 1) {
            for (int ox = lo; ox < hi; ++ox) row[ox] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox * s] += srow[ox];
          }
        }
      }
    }
  }
}

// Output rows per im2col tile, sized so a tile stays cache resident.
int TileRows(const ConvGeometry& g) {
  const int64_t per_row = g.col_rows() * g.ow;
  return static_cast<int>(std::clamp<int64_t>(kTileFloats / std::max<int64_t>(per_row, 1), 1, g.oh));
}

// Per-thread scratch reused across convolutions; contents are undefined.
float* Scratch(int slot, int64_t size) {
  thread_local Buffer buffers[2];
  Buffer& b = buffers[slot];
  if (static_cast<int64_t>(b.size()) < size) b.resize(size);
  return b.data();
}

}  // namespace

Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvOptions& options) {
  RequireRank(x, 4, "Conv2d input");
  RequireRank(weight, 4, "Conv2d weight");
  ConvGeometry g{};
  g.opt = options;
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.groups = options.groups;
  FSEG_CHECK(weight.dim(3) == g.k && g.groups >= 1 && g.cin % g.groups == 0 &&
                 g.cout % g.groups == 0 && weight.dim(1) == g.cin / g.groups,
             ErrorKind::kShapeMismatch,
             "Conv2d: input " + ShapeString(x.shape()) + " weight " +
                 ShapeString(weight.shape()));
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  const int span = options.dilation * (g.k - 1) + 1;
  g.oh = (g.h + 2 * options.padding - span) / options.stride + 1;
  g.ow = (g.w + 2 * options.padding - span) / options.stride + 1;
  FSEG_CHECK(g.oh > 0 && g.ow > 0, ErrorKind::kShapeMismatch,
             "Conv2d: empty output for input " + ShapeString(x.shape()));
  if (bias.defined()) {
    FSEG_CHECK(bias.numel() == g.cout, ErrorKind::kShapeMismatch, "Conv2d bias");
  }

  using ColMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>>;
  using StridedRM = Eigen::Map<MatRM, 0, Eigen::OuterStride<>>;
  using CStridedRM = Eigen::Map<const MatRM, 0, Eigen::OuterStride<>>;
  const int64_t out_hw = g.out_hw();
  const int64_t in_hw = static_cast<int64_t>(g.h) * g.w;
  const int tile = TileRows(g);
  Buffer out(static_cast<int64_t>(g.n) * g.cout * out_hw);
  float* col = g.pointwise() ? nullptr : Scratch(0, g.col_rows() * tile * g.ow);
  for (int n = 0; n < g.n; ++n) {
    const float* xn = x.data() + static_cast<int64_t>(n) * g.cin * in_hw;
    for (int grp = 0; grp < g.groups; ++grp) {
      CMapRM wmat(weight.data() + static_cast<int64_t>(grp) * g.cout_g * g.col_rows(),
                  g.cout_g, g.col_rows());
      float* yn = out.data() + (static_cast<int64_t>(n) * g.cout + grp * g.cout_g) * out_hw;
      if (g.pointwise()) {
        MapRM ymat(yn, g.cout_g, out_hw);
        ymat.noalias() = wmat * CMapRM(xn, g.col_rows(), out_hw);
        continue;
      }
      for (int oy0 = 0; oy0 < g.oh; oy0 += tile) {
        const int oy1 = std::min(oy0 + tile, g.oh);
        const int64_t cols = static_cast<int64_t>(oy1 - oy0) * g.ow;
        Im2Col(xn, g, grp * g.cin_g, oy0, oy1, col);
        StridedRM ymat(yn + static_cast<int64_t>(oy0) * g.ow, g.cout_g, cols,
                       Eigen::OuterStride<>(out_hw));
        ymat.noalias() = wmat * CMapRM(col, g.col_rows(), cols);
      }
    }
    if (bias.defined()) {
      for (int c = 0; c < g.cout; ++c) {
        float* plane = out.data() + (static_cast<int64_t>(n) * g.cout + c) * out_hw;
        const float b = bias.at(c);
        for (int64_t i = 0; i < out_hw; ++i) plane[i] += b;
      }
    }
  }

  auto xi = x.impl(), wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return MakeResult(
      {g.n, g.cout, g.oh, g.ow}, std::move(out), {x, weight, bias},
      [xi, wi, bi, g](const TensorImpl& o) {
        float* gx = GradTarget(xi);
        float* gw = GradTarget(wi);
        float* gb = GradTarget(bi);
        const int64_t out_hw = g.out_hw();
        const int64_t in_hw = static_cast<int64_t>(g.h) * g.w;
        const int tile = TileRows(g);
        const int64_t tile_size = g.col_rows() * tile * g.ow;
        float* col = g.pointwise() || !gw ? nullptr : Scratch(0, tile_size);
        float* dcol = g.pointwise() || !gx ? nullptr : Scratch(1, tile_size);
        for (int n = 0; n < g.n; ++n) {
          const float* xn = xi->data.data() + static_cast<int64_t>(n) * g.cin * in_hw;
          for (int grp = 0; grp < g.groups; ++grp) {
            const float* dyn =
                o.grad.data() + (static_cast<int64_t>(n) * g.cout + grp * g.cout_g) * out_hw;
            const int64_t woff = static_cast<int64_t>(grp) * g.cout_g * g.col_rows();
            CMapRM wmat(wi->data.data() + woff, g.cout_g, g.col_rows());
            if (g.pointwise()) {
              CMapRM dy(dyn, g.cout_g, out_hw);
              if (gw) {
                MapRM dw(gw + woff, g.cout_g, g.col_rows());
                dw.noalias() += dy * CMapRM(xn, g.col_rows(), out_hw).transpose();
              }
              if (gx) {
                MapRM dxm(gx + static_cast<int64_t>(n) * g.cin * in_hw, g.cin, in_hw);
                dxm.noalias() += wmat.transpose() * dy;
              }
              continue;
            }
            for (int oy0 = 0; oy0 < g.oh; oy0 += tile) {
              const int oy1 = std::min(oy0 + tile, g.oh);
              const int64_t cols = static_cast<int64_t>(oy1 - oy0) * g.ow;
              CStridedRM dy(dyn + static_cast<int64_t>(oy0) * g.ow, g.cout_g, cols,
                            Eigen::OuterStride<>(out_hw));
              if (gw) {
                Im2Col(xn, g, grp * g.cin_g, oy0, oy1, col);
                MapRM dw(gw + woff, g.cout_g, g.col_rows());
                dw.noalias() += dy * CMapRM(col, g.col_rows(), cols).transpose();
              }
              if (gx) {
                // Transposed orientation is faster for narrow output channels.
                ColMap dct(dcol, cols, g.col_rows());
                dct.noalias() = dy.transpose() * wmat;
                Col2Im(dcol, g, grp * g.cin_g, oy0, oy1,
                       gx + static_cast<int64_t>(n) * g.cin * in_hw);
              }
            }
          }
          if (gb) {
            for (int c = 0; c < g.cout; ++c) {
              const float* plane =
                  o.grad.data() + (static_cast<int64_t>(n) * g.cout + c) * out_hw;
              float s = 0.0f;
              for (int64_t i = 0; i < out_hw; ++i) s += plane[i];
              gb[c] += s;
            }
          }
        }
      });
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  RequireRank(weight, 2, "Linear weight");
  const int cin = weight.dim(1), cout = weight.dim(0);
  FSEG_CHECK(x.rank() >= 1 && x.dim(-1) == cin, ErrorKind::kShapeMismatch,
             "Linear: input " + ShapeString(x.shape()) + " weight " +
                 ShapeString(weight.shape()));
  if (bias.defined()) {
    FSEG_CHECK(bias.numel() == cout, ErrorKind::kShapeMismatch, "Linear bias");
  }
  const int64_t rows = x.numel() / cin;
  Shape out_shape = x.shape();
  out_shape.back() = cout;
  Buffer out(rows * cout);
  {
    CMapRM xm(x.data(), rows, cin);
    CMapRM wm(weight.data(), cout, cin);
    MapRM ym(out.data(), rows, cout);
    ym.noalias() = xm * wm.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::RowVectorXf> bv(bias.data(), cout);
      ym.rowwise() += bv;
    }
  }
  auto xi = x.impl(), wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return MakeResult(std::move(out_shape), std::move(out), {x, weight, bias},
                    [xi, wi, bi, rows, cin, cout](const TensorImpl& o) {
                      CMapRM dy(o.grad.data(), rows, cout);
                      if (float* gx = GradTarget(xi)) {
                        MapRM dx(gx, rows, cin);
                        dx.noalias() += dy * CMapRM(wi->data.data(), cout, cin);
                      }
                      if (float* gw = GradTarget(wi)) {
                        MapRM dw(gw, cout, cin);
                        dw.noalias() += dy.transpose() * CMapRM(xi->data.data(), rows, cin);
                      }
                      if (float* gb = GradTarget(bi)) {
                        Eigen::Map<Eigen::RowVectorXf> db(gb, cout);
                        db += dy.colwise().sum();
                      }
                    });
}

namespace {

// Leading batch, channel count and flattened trailing extent of x.
struct ChannelView {
  int batch, channels;
  int64_t tokens;
};

ChannelView ViewChannels(const Tensor& x, const char* op) {
  FSEG_CHECK(x.rank() >= 3, ErrorKind::kShapeMismatch,
             std::string(op) + ": expected [B, C, ...], got " + ShapeString(x.shape()));
  return {x.dim(0), x.dim(1), x.numel() / (static_cast<int64_t>(x.dim(0)) * x.dim(1))};
}

}  // namespace

Tensor ChannelLinear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  RequireRank(weight, 2, "ChannelLinear weight");
  const ChannelView v = ViewChannels(x, "ChannelLinear");
  const int cin = weight.dim(1), cout = weight.dim(0);
  FSEG_CHECK(v.channels == cin, ErrorKind::kShapeMismatch,
             "ChannelLinear: input " + ShapeString(x.shape()) + " weight " +
                 ShapeString(weight.shape()));
  if (bias.defined()) {
    FSEG_CHECK(bias.numel() == cout, ErrorKind::kShapeMismatch, "ChannelLinear bias");
  }
  Shape out_shape = x.shape();
  out_shape[1] = cout;
  Buffer out(static_cast<int64_t>(v.batch) * cout * v.tokens);
  CMapRM w(weight.data(), cout, cin);
  for (int b = 0; b < v.batch; ++b) {
    CMapRM xb(x.data() + static_cast<int64_t>(b) * cin * v.tokens, cin, v.tokens);
    MapRM yb(out.data() + static_cast<int64_t>(b) * cout * v.tokens, cout, v.tokens);
    yb.noalias() = w * xb;
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) yb.row(c).array() += bias.at(c);
    }
  }
  auto xi = x.impl(), wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return MakeResult(std::move(out_shape), std::move(out), {x, weight, bias},
                    [xi, wi, bi, v, cin, cout](const TensorImpl& o) {
                      float* gx = GradTarget(xi);
                      float* gw = GradTarget(wi);
                      float* gb = GradTarget(bi);
                      CMapRM w(wi->data.data(), cout, cin);
                      for (int b = 0; b < v.batch; ++b) {
                        CMapRM dy(o.grad.data() + static_cast<int64_t>(b) * cout * v.tokens,
                                  cout, v.tokens);
                        if (gw) {
                          CMapRM xb(xi->data.data() + static_cast<int64_t>(b) * cin * v.tokens,
                                    cin, v.tokens);
                          MapRM(gw, cout, cin).noalias() += dy * xb.transpose();
                        }
                        if (gx) {
                          MapRM(gx + static_cast<int64_t>(b) * cin * v.tokens, cin, v.tokens)
                              .noalias() += w.transpose() * dy;
                        }
                        if (gb) {
                          for (int c = 0; c < cout; ++c) gb[c] += dy.row(c).sum();
                        }
                      }
                    });
}

Tensor ChannelGram(const Tensor& a, const Tensor& c) {
  const ChannelView va = ViewChannels(a, "ChannelGram");
  const ChannelView vc = ViewChannels(c, "ChannelGram");
  FSEG_CHECK(va.batch == vc.batch && va.tokens == vc.tokens, ErrorKind::kShapeMismatch,
             "ChannelGram: " + ShapeString(a.shape()) + " vs " + ShapeString(c.shape()));
  const int ca = va.channels, cc = vc.channels;
  const int64_t n = va.tokens;
  Buffer out(static_cast<int64_t>(va.batch) * ca * cc);
  for (int b = 0; b < va.batch; ++b) {
    CMapRM ab(a.data() + b * ca * n, ca, n);
    CMapRM cb(c.data() + b * cc * n, cc, n);
    MapRM(out.data() + static_cast<int64_t>(b) * ca * cc, ca, cc).noalias() =
        ab * cb.transpose();
  }
  auto ai = a.impl(), ci = c.impl();
  const int batch = va.batch;
  return MakeResult({batch, ca, cc}, std::move(out), {a, c},
                    [ai, ci, batch, ca, cc, n](const TensorImpl& o) {
                      float* ga = GradTarget(ai);
                      float* gc = GradTarget(ci);
                      for (int b = 0; b < batch; ++b) {
                        CMapRM dg(o.grad.data() + static_cast<int64_t>(b) * ca * cc, ca, cc);
                        if (ga) {
                          CMapRM cb(ci->data.data() + b * cc * n, cc, n);
                          MapRM(ga + b * ca * n, ca, n).noalias() += dg * cb;
                        }
                        if (gc) {
                          CMapRM ab(ai->data.data() + b * ca * n, ca, n);
                          MapRM(gc + b * cc * n, cc, n).noalias() += dg.transpose() * ab;
                        }
                      }
                    });
}

Tensor ChannelMix(const Tensor& g, const Tensor& x) {
  RequireRank(g, 3, "ChannelMix context");
  const ChannelView v = ViewChannels(x, "ChannelMix");
  const int ci = g.dim(1), co = g.dim(2);
  FSEG_CHECK(g.dim(0) == v.batch && ci == v.channels, ErrorKind::kShapeMismatch,
             "ChannelMix: context " + ShapeString(g.shape()) + " input " +
                 ShapeString(x.shape()));
  const int64_t n = v.tokens;
  Shape out_shape = x.shape();
  out_shape[1] = co;
  Buffer out(static_cast<int64_t>(v.batch) * co * n);
  for (int b = 0; b < v.batch; ++b) {
    CMapRM gb(g.data() + static_cast<int64_t>(b) * ci * co, ci, co);
    CMapRM xb(x.data() + b * ci * n, ci, n);
    MapRM(out.data() + b * co * n, co, n).noalias() = gb.transpose() * xb;
  }
  auto gi = g.impl(), xi = x.impl();
  const int batch = v.batch;
  return MakeResult(std::move(out_shape), std::move(out), {g, x},
                    [gi, xi, batch, ci, co, n](const TensorImpl& o) {
                      float* gg = GradTarget(gi);
                      float* gx = GradTarget(xi);
                      for (int b = 0; b < batch; ++b) {
                        CMapRM dy(o.grad.data() + b * co * n, co, n);
                        if (gg) {
                          CMapRM xb(xi->data.data() + b * ci * n, ci, n);
                          MapRM(gg + static_cast<int64_t>(b) * ci * co, ci, co).noalias() +=
                              xb * dy.transpose();
                        }
                        if (gx) {
                          CMapRM gb(gi->data.data() + static_cast<int64_t>(b) * ci * co, ci, co);
                          MapRM(gx + b * ci * n, ci, n).noalias() += gb * dy;
                        }
                      }
                    });
}

Tensor MatMul(const Tensor& a, const Tensor& b, bool transpose_a,
              bool transpose_b) {
  RequireRank(a, 3, "MatMul lhs");
  RequireRank(b, 3, "MatMul rhs");
  const int batch = a.dim(0);
  const int ar = a.dim(1), ac = a.dim(2), br = b.dim(1), bc = b.dim(2);
  const int m = transpose_a ? ac : ar;
  const int k = transpose_a ? ar : ac;
  const int kb = transpose_b ? bc : br;
  const int n = transpose_b ? br : bc;
  FSEG_CHECK(b.dim(0) == batch && k == kb, ErrorKind::kShapeMismatch,
             "MatMul: " + ShapeString(a.shape()) + " x " + ShapeString(b.shape()));
  Buffer out(static_cast<int64_t>(batch) * m * n);
  const int64_t sa = static_cast<int64_t>(ar) * ac, sb = static_cast<int64_t>(br) * bc,
                sc = static_cast<int64_t>(m) * n;
  for (int i = 0; i < batch; ++i) {
    CMapRM am(a.data() + i * sa, ar, ac);
    CMapRM bm(b.data() + i * sb, br, bc);
    MapRM cm(out.data() + i * sc, m, n);
    if (!transpose_a && !transpose_b) cm.noalias() = am * bm;
    else if (transpose_a && !transpose_b) cm.noalias() = am.transpose() * bm;
    else if (!transpose_a && transpose_b) cm.noalias() = am * bm.transpose();
    else cm.noalias() = am.transpose() * bm.transpose();
  }
  auto ai = a.impl(), bi = b.impl();
  return MakeResult(
      {batch, m, n}, std::move(out), {a, b},
      [=](const TensorImpl& o) {
        float* ga = GradTarget(ai);
        float* gb = GradTarget(bi);
        for (int i = 0; i < batch; ++i) {
          CMapRM dc(o.grad.data() + i * sc, m, n);
          CMapRM am(ai->data.data() + i * sa, ar, ac);
          CMapRM bm(bi->data.data() + i * sb, br, bc);
          // C = op(A) op(B); dop(A) = dC op(B)^T, dop(B) = op(A)^T dC.
          if (ga) {
            MapRM da(ga + i * sa, ar, ac);
            if (!transpose_a && !transpose_b) da.noalias() += dc * bm.transpose();
            else if (!transpose_a && transpose_b) da.noalias() += dc * bm;
            else if (transpose_a && !transpose_b) da.noalias() += bm * dc.transpose();
            else da.noalias() += bm.transpose() * dc.transpose();
          }
          if (gb) {
            MapRM db(gb + i * sb, br, bc);
            if (!transpose_a && !transpose_b) db.noalias() += am.transpose() * dc;
            else if (transpose_a && !transpose_b) db.noalias() += am * dc;
            else if (!transpose_a && transpose_b) db.noalias() += dc.transpose() * am;
            else db.noalias() += dc.transpose() * am.transpose();
          }
        }
      });
}

Tensor Softmax(const Tensor& a) {
  const int c = a.dim(-1);
  const int64_t rows = a.numel() / c;
  Buffer out(a.numel());
  for (int64_t r = 0; r < rows; ++r) {
    const float* x = a.data() + r * c;
    float* y = out.data() + r * c;
    const float mx = *std::max_element(x, x + c);
    float s = 0.0f;
    for (int i = 0; i < c; ++i) s += (y[i] = std::exp(x[i] - mx));
    const float inv = 1.0f / s;
    for (int i = 0; i < c; ++i) y[i] *= inv;
  }
  auto ai = a.impl();
  return MakeResult(a.shape(), std::move(out), {a}, [ai, rows, c](const TensorImpl& o) {
    float* g = GradTarget(ai);
    if (!g) return;
    for (int64_t r = 0; r < rows; ++r) {
      const float* y = o.data.data() + r * c;
      const float* gy = o.grad.data() + r * c;
      float dot = 0.0f;
      for (int i = 0; i < c; ++i) dot += y[i] * gy[i];
      for (int i = 0; i < c; ++i) g[r * c + i] += y[i] * (gy[i] - dot);
    }
  });
}

Tensor LayerNorm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                 float eps) {
  const int c = a.dim(-1);
  FSEG_CHECK(gamma.numel() == c && beta.numel() == c, ErrorKind::kShapeMismatch,
             "LayerNorm affine size");
  const int64_t rows = a.numel() / c;
  Buffer out(a.numel());
  Buffer xhat(a.numel());
  Buffer inv_std(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const float* x = a.data() + r * c;
    float mean = 0.0f;
    for (int i = 0; i < c; ++i) mean += x[i];
    mean /= c;
    float var = 0.0f;
    for (int i = 0; i < c; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= c;
    const float is = 1.0f / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int i = 0; i < c; ++i) {
      const float xh = (x[i] - mean) * is;
      xhat[r * c + i] = xh;
      out[r * c + i] = xh * gamma.at(i) + beta.at(i);
    }
  }
  auto ai = a.impl(), gi = gamma.impl(), bi = beta.impl();
  return MakeResult(
      a.shape(), std::move(out), {a, gamma, beta},
      [ai, gi, bi, rows, c, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const TensorImpl& o) {
        float* ga = GradTarget(ai);
        float* gg = GradTarget(gi);
        float* gb = GradTarget(bi);
        for (int64_t r = 0; r < rows; ++r) {
          const float* gy = o.grad.data() + r * c;
          const float* xh = xhat.data() + r * c;
          if (gg) for (int i = 0; i < c; ++i) gg[i] += gy[i] * xh[i];
          if (gb) for (int i = 0; i < c; ++i) gb[i] += gy[i];
          if (ga) {
            float sum_g = 0.0f, sum_gx = 0.0f;
            for (int i = 0; i < c; ++i) {
              const float gxh = gy[i] * gi->data[i];
              sum_g += gxh;
              sum_gx += gxh * xh[i];
            }
            for (int i = 0; i < c; ++i) {
              const float gxh = gy[i] * gi->data[i];
              ga[r * c + i] += inv_std[r] * (gxh - sum_g / c - xh[i] * sum_gx / c);
            }
          }
        }
      });
}

namespace {

struct Tap {
  int i0, i1;
  float frac;
};

std::vector<Tap> BilinearTaps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, static_cast<float>(src - i0)};
  }
  return taps;
}

}  // namespace

Tensor ResizeBilinear(const Tensor& x, int out_h, int out_w) {
  RequireRank(x, 4, "ResizeBilinear");
  FSEG_CHECK(out_h > 0 && out_w > 0, ErrorKind::kShapeMismatch,
             "ResizeBilinear: empty target");
  const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  auto ty = BilinearTaps(h, out_h);
  auto tx = BilinearTaps(w, out_w);
  Buffer out(static_cast<int64_t>(nc) * out_h * out_w);
  for (int p = 0; p < nc; ++p) {
    const float* src = x.data() + static_cast<int64_t>(p) * h * w;
    float* dst = out.data() + static_cast<int64_t>(p) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const float* r0 = src + static_cast<int64_t>(ty[oy].i0) * w;
      const float* r1 = src + static_cast<int64_t>(ty[oy].i1) * w;
      const float fy = ty[oy].frac;
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& t = tx[ox];
        const float top = r0[t.i0] + t.frac * (r0[t.i1] - r0[t.i0]);
        const float bot = r1[t.i0] + t.frac * (r1[t.i1] - r1[t.i0]);
        dst[static_cast<int64_t>(oy) * out_w + ox] = top + fy * (bot - top);
      }
    }
  }
  auto xi = x.impl();
  return MakeResult({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x},
                    [xi, nc, h, w, out_h, out_w, ty, tx](const TensorImpl& o) {
                      float* g = GradTarget(xi);
                      if (!g) return;
                      for (int p = 0; p < nc; ++p) {
                        float* gs = g + static_cast<int64_t>(p) * h * w;
                        const float* gd =
                            o.grad.data() + static_cast<int64_t>(p) * out_h * out_w;
                        for (int oy = 0; oy < out_h; ++oy) {
                          float* r0 = gs + static_cast<int64_t>(ty[oy].i0) * w;
                          float* r1 = gs + static_cast<int64_t>(ty[oy].i1) * w;
                          const float fy = ty[oy].frac;
                          for (int ox = 0; ox < out_w; ++ox) {
                            const Tap& t = tx[ox];
                            const float v = gd[static_cast<int64_t>(oy) * out_w + ox];
                            const float top = v * (1.0f - fy), bot = v * fy;
                            r0[t.i0] += top * (1.0f - t.frac);
                            r0[t.i1] += top * t.frac;
                            r1[t.i0] += bot * (1.0f - t.frac);
                            r1[t.i1] += bot * t.frac;
                          }
                        }
                      }
                    });
}

int PadSourceIndex(int i, int n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case PadMode::kZero:
      return -1;
    case PadMode::kReplicate:
      return i < 0 ? 0 : n - 1;
    case PadMode::kReflect: {
      if (n == 1) return 0;
      // Mirror without repeating the edge sample; period 2(n-1).
      const int period = 2 * (n - 1);
      int m = i % period;
      if (m < 0) m += period;
      return m < n ? m : period - m;
    }
  }
  return -1;
}

Tensor Pad2d(const Tensor& x, int top, int bottom, int left, int right,
             PadMode mode) {
  RequireRank(x, 4, "Pad2d");
  FSEG_CHECK(top >= 0 && bottom >= 0 && left >= 0 && right >= 0,
             ErrorKind::kShapeMismatch, "Pad2d: negative padding");
  const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h + top + bottom, ow = w + left + right;
  std::vector<int> sy(oh), sx(ow);
  for (int y = 0; y < oh; ++y) sy[y] = PadSourceIndex(y - top, h, mode);
  for (int xx = 0; xx < ow; ++xx) sx[xx] = PadSourceIndex(xx - left, w, mode);
  Buffer out(static_cast<int64_t>(nc) * oh * ow, 0.0f);
  for (int p = 0; p < nc; ++p) {
    const float* src = x.data() + static_cast<int64_t>(p) * h * w;
    float* dst = out.data() + static_cast<int64_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      if (sy[y] < 0) continue;
      for (int xx = 0; xx < ow; ++xx) {
        if (sx[xx] < 0) continue;
        dst[static_cast<int64_t>(y) * ow + xx] = src[static_cast<int64_t>(sy[y]) * w + sx[xx]];
      }
    }
  }
  auto xi = x.impl();
  return MakeResult({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                    [xi, nc, h, w, oh, ow, sy, sx](const TensorImpl& o) {
                      float* g = GradTarget(xi);
                      if (!g) return;
                      for (int p = 0; p < nc; ++p) {
                        float* gs = g + static_cast<int64_t>(p) * h * w;
                        const float* gd = o.grad.data() + static_cast<int64_t>(p) * oh * ow;
                        for (int y = 0; y < oh; ++y) {
                          if (sy[y] < 0) continue;
                          for (int xx = 0; xx < ow; ++xx) {
                            if (sx[xx] < 0) continue;
                            gs[static_cast<int64_t>(sy[y]) * w + sx[xx]] +=
                                gd[static_cast<int64_t>(y) * ow + xx];
                          }
                        }
                      }
                    });
}

Tensor Crop2d(const Tensor& x, int top, int left, int height, int width) {
  RequireRank(x, 4, "Crop2d");
  FSEG_CHECK(top >= 0 && left >= 0 && height > 0 && width > 0 &&
                 top + height <= x.dim(2) && left + width <= x.dim(3),
             ErrorKind::kShapeMismatch, "Crop2d out of range");
  return Narrow(Narrow(x, 2, top, height), 3, left, width);
}

Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& labels,
                    int ignore_index) {
  RequireRank(logits, 4, "CrossEntropy");
  const int n = logits.dim(0), k = logits.dim(1);
  const int64_t hw = static_cast<int64_t>(logits.dim(2)) * logits.dim(3);
  FSEG_CHECK(static_cast<int64_t>(labels.size()) == n * hw, ErrorKind::kShapeMismatch,
             "CrossEntropy: label count does not match logits " +
                 ShapeString(logits.shape()));
  int64_t count = 0;
  for (int l : labels) {
    if (l == ignore_index) continue;
    FSEG_CHECK(l >= 0 && l < k, ErrorKind::kShapeMismatch,
               "CrossEntropy: label " + std::to_string(l) + " out of range");
    ++count;
  }
  FSEG_CHECK(count > 0, ErrorKind::kEmptyTarget, "every pixel is ignored");

  // Softmax probabilities are kept for the backward pass.
  Buffer prob(logits.numel());
  double total = 0.0;
  const float* x = logits.data();
  for (int b = 0; b < n; ++b) {
    const float* xb = x + static_cast<int64_t>(b) * k * hw;
    float* pb = prob.data() + static_cast<int64_t>(b) * k * hw;
    for (int64_t p = 0; p < hw; ++p) {
      float mx = xb[p];
      for (int c = 1; c < k; ++c) mx = std::max(mx, xb[c * hw + p]);
      float s = 0.0f;
      for (int c = 0; c < k; ++c) s += (pb[c * hw + p] = std::exp(xb[c * hw + p] - mx));
      for (int c = 0; c < k; ++c) pb[c * hw + p] /= s;
      const int l = labels[b * hw + p];
      if (l == ignore_index) continue;
      total += -(static_cast<double>(xb[l * hw + p]) - mx - std::log(static_cast<double>(s)));
    }
  }
  auto li = logits.impl();
  return MakeResult(
      {1}, {static_cast<float>(total / count)}, {logits},
      [li, labels, ignore_index, n, k, hw, count,
       prob = std::move(prob)](const TensorImpl& o) {
        float* g = GradTarget(li);
        if (!g) return;
        const float scale = o.grad[0] / static_cast<float>(count);
        for (int b = 0; b < n; ++b) {
          for (int64_t p = 0; p < hw; ++p) {
            const int l = labels[b * hw + p];
            if (l == ignore_index) continue;
            const int64_t base = static_cast<int64_t>(b) * k * hw + p;
            for (int c = 0; c < k; ++c) {
              g[base + c * hw] += scale * (prob[base + c * hw] - (c == l ? 1.0f : 0.0f));
            }
          }
        }
      });
}

}  // namespace fseg::ops
