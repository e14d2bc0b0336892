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

// Dense float tensors with tape-free reverse-mode differentiation.
//
// Every op that consumes a tensor with requires_grad() records a GradFn on
// its result. Backward() walks the recorded graph in reverse topological
// order and accumulates into the grad buffers of every tensor that asked for
// one. Graph nodes are released as they are consumed, so Backward() may be
// called once per graph.

#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace fseg {

using Shape = std::vector<int>;

// Cache-line aligned storage. Vectorized kernels peel loops by address, so a
// fixed alignment keeps floating-point results identical across processes.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<float, AlignedAllocator<float>>;

inline Buffer ToBuffer(const std::vector<float>& v) { return Buffer(v.begin(), v.end()); }

int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

struct TensorImpl;

struct GradFn {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads out.grad and accumulates into the grads of `inputs`.
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
  std::shared_ptr<GradFn> grad_fn;

  // Zero-filled gradient buffer, allocated on first use.
  float* EnsureGrad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, Buffer values);
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor Scalar(float value) { return Tensor(Shape{1}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  // Negative axes count from the end.
  int dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  float* data() { return impl_->data.data(); }
  const float* data() const { return impl_->data.data(); }
  std::span<float> values() { return impl_->data; }
  std::span<const float> values() const { return impl_->data; }
  const Buffer& vec() const { return impl_->data; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  float* mutable_grad() { return impl_->EnsureGrad(); }
  void ZeroGrad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
  }

  float item() const;
  float at(int64_t index) const { return impl_->data[index]; }

  // Seeds d(self)/d(self) = 1 and propagates. Self must hold one element.
  void Backward();

  // Same values, cut from the graph.
  Tensor Detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

bool GradEnabled();

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. A GradFn is attached only when recording is enabled
// and at least one input requires a gradient.
Tensor MakeResult(Shape shape, Buffer values,
                  const std::vector<Tensor>& inputs,
                  std::function<void(const TensorImpl& out)> backward);

// Gradient buffer of `t` when it participates in differentiation, else null.
float* GradTarget(const std::shared_ptr<TensorImpl>& t);

}  // namespace fseg
