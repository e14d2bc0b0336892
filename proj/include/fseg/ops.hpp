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
#pragma once

// Differentiable tensor operations. Spatial tensors are NCHW; token tensors
// put the channel axis last.

#include <vector>

#include "fseg/tensor.hpp"

namespace fseg::ops {

// Elementwise, identical shapes.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, float s);
Tensor AddScalar(const Tensor& a, float s);
Tensor Square(const Tensor& a);

Tensor Relu(const Tensor& a);
Tensor LeakyRelu(const Tensor& a, float slope);
Tensor Gelu(const Tensor& a);
Tensor Sigmoid(const Tensor& a);

// Full reductions to a one-element tensor.
Tensor Sum(const Tensor& a);
Tensor Mean(const Tensor& a);

Tensor Reshape(const Tensor& a, Shape shape);
Tensor Permute(const Tensor& a, const std::vector<int>& axes);
Tensor Concat(const std::vector<Tensor>& parts, int axis);
// Sub-range [start, start+length) along `axis`.
Tensor Narrow(const Tensor& a, int axis, int start, int length);

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};

// x [N,Cin,H,W], weight [Cout,Cin/groups,k,k], bias [Cout] or undefined.
// Zero padding.
Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvOptions& options);

// x [..., Cin], weight [Cout, Cin], bias [Cout] or undefined.
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Channel-major counterparts for x [B, C, ...] with the trailing axes taken
// as one token axis of length N.
// y[b] = W x[b] + bias: [B, Cout, ...].
Tensor ChannelLinear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// g[b] = a[b] c[b]^T: [B, Ca, Cc].
Tensor ChannelGram(const Tensor& a, const Tensor& c);
// y[b] = g[b]^T x[b]: g [B, Ci, Co], x [B, Ci, ...] -> [B, Co, ...].
Tensor ChannelMix(const Tensor& g, const Tensor& x);

// Batched product of rank-3 tensors; the flags transpose the last two axes.
Tensor MatMul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);

// Along the last axis.
Tensor Softmax(const Tensor& a);
Tensor LayerNorm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                 float eps = 1e-5f);

// Half-pixel-centre bilinear resampling of [N,C,H,W].
Tensor ResizeBilinear(const Tensor& x, int out_h, int out_w);

enum class PadMode { kZero, kReflect, kReplicate };

Tensor Pad2d(const Tensor& x, int top, int bottom, int left, int right,
             PadMode mode);
Tensor Crop2d(const Tensor& x, int top, int left, int height, int width);

// Mean negative log-softmax over pixels whose label differs from
// ignore_index. logits [N,K,H,W]; labels hold N*H*W entries.
Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& labels,
                    int ignore_index);

// Source index for padded coordinate `i` of an axis of length n; -1 means a
// zero sample.
int PadSourceIndex(int i, int n, PadMode mode);

}  // namespace fseg::ops
