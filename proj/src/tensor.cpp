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
#include "fseg/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "fseg/errors.hpp"

namespace fseg {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

float* TensorImpl::EnsureGrad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  return grad.data();
}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<TensorImpl>()) {
  for (int d : shape) {
    FSEG_CHECK(d >= 0, ErrorKind::kShapeMismatch,
               "negative extent in " + ShapeString(shape));
  }
  impl_->data.assign(NumElements(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, Buffer values)
    : impl_(std::make_shared<TensorImpl>()) {
  FSEG_CHECK(NumElements(shape) == static_cast<int64_t>(values.size()),
             ErrorKind::kShapeMismatch,
             "value count " + std::to_string(values.size()) +
                 " does not fill " + ShapeString(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  FSEG_CHECK(axis >= 0 && axis < r, ErrorKind::kShapeMismatch,
             "axis out of range for " + ShapeString(shape()));
  return impl_->shape[axis];
}

float Tensor::item() const {
  FSEG_CHECK(numel() == 1, ErrorKind::kShapeMismatch,
             "item() on tensor of shape " + ShapeString(shape()));
  return impl_->data[0];
}

Tensor Tensor::Detach() const { return Tensor(impl_->shape, impl_->data); }

void Tensor::Backward() {
  FSEG_CHECK(numel() == 1, ErrorKind::kShapeMismatch,
             "Backward() needs a single-element tensor");
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of producers.
  // Owning handles: releasing a node's grad_fn may drop the last other
  // reference to its inputs.
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
  stack.emplace_back(impl_, 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      std::shared_ptr<TensorImpl> child = node->grad_fn->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(std::move(node));
    stack.pop_back();
  }

  impl_->EnsureGrad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = it->get();
    if (!node->grad_fn) continue;
    if (!node->grad.empty()) node->grad_fn->backward(*node);
    node->grad_fn.reset();
  }
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor MakeResult(Shape shape, Buffer values,
                  const std::vector<Tensor>& inputs,
                  std::function<void(const TensorImpl& out)> backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (!any) return out;
  auto fn = std::make_shared<GradFn>();
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) fn->inputs.push_back(in.impl());
  }
  fn->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(fn);
  return out;
}

float* GradTarget(const std::shared_ptr<TensorImpl>& t) {
  if (!t || !t->requires_grad) return nullptr;
  return t->EnsureGrad();
}

}  // namespace fseg
