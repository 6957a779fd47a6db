// Copyright 2026 The ProtoDiff Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "protodiff/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "protodiff/error.hpp"
#include "tensor_impl.hpp"

namespace protodiff {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool g_grad_enabled = true;

const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  require(impl != nullptr, ErrorKind::kState, "use of an undefined tensor");
  return *impl;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  require(shape_numel(shape) == values.size(), ErrorKind::kShapeMismatch,
          "tensor shape " + shape_string(shape) + " does not hold " +
              std::to_string(values.size()) + " values");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = stddev * rng.normal();
  return from(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  require(axis < s.size(), ErrorKind::kInvalidArgument,
          "axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

double Tensor::item() const {
  require(numel() == 1, ErrorKind::kShapeMismatch,
          "item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool value) {
  checked(impl_);
  impl_->requires_grad = value;
}

bool Tensor::tracked() const { return checked(impl_).tracked(); }

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

void Tensor::zero_grad() {
  checked(impl_);
  impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::clear_grad() {
  checked(impl_);
  impl_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& self = checked(impl_);
  return from(self.shape, self.data, false);
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   const std::vector<Tensor>& inputs, BackwardFn fn) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::kNonFinite,
           std::string("non-finite value produced by ") + op);
    }
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (g_grad_enabled) {
    bool any_tracked = false;
    for (const auto& t : inputs) any_tracked = any_tracked || t.tracked();
    if (any_tracked) {
      auto node = std::make_shared<Node>();
      node->op = op;
      for (const auto& t : inputs) node->inputs.push_back(t.impl());
      node->backward = std::move(fn);
      impl->node = std::move(node);
    }
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

void backward(const Tensor& loss) {
  require(loss.defined(), ErrorKind::kState, "backward on undefined tensor");
  require(loss.numel() == 1, ErrorKind::kInvalidArgument,
          "backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  auto root = loss.impl();
  if (!root->node) {
    require(root->requires_grad, ErrorKind::kState,
            "backward on a tensor without a recorded graph");
    if (root->grad.empty()) root->grad.assign(1, 0.0);
    root->grad[0] += 1.0;
    return;
  }
  require(!root->node->consumed, ErrorKind::kState,
          "backward called twice on the same graph");

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      auto* child = impl->node->inputs[next++].get();
      if (child->tracked() && visited.insert(child).second) {
        require(!child->node || !child->node->consumed, ErrorKind::kState,
                "backward through an already consumed graph");
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* impl = *it;
    if (!impl->node) continue;  // leaf: keep accumulated grad
    auto& node = *impl->node;
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
    std::vector<std::vector<double>*> sinks;
    sinks.reserve(node.inputs.size());
    for (auto& input : node.inputs) {
      if (input->tracked()) {
        if (input->grad.empty()) input->grad.assign(input->data.size(), 0.0);
        sinks.push_back(&input->grad);
      } else {
        sinks.push_back(nullptr);
      }
    }
    node.backward(impl->grad, sinks);
  }
  // Release intermediate grads and the graph itself.
  for (auto* impl : order) {
    if (!impl->node) continue;
    impl->grad.clear();
    impl->grad.shrink_to_fit();
    impl->node->consumed = true;
    impl->node->backward = nullptr;
    impl->node->inputs.clear();
  }
}

}  // namespace protodiff
