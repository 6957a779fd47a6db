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

// Dense row-major f64 tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Ops executed while grad
// mode is enabled and at least one input is tracked record a node on their
// output; backward() walks those nodes once in reverse topological order and
// then releases them.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protodiff/rng.hpp"

namespace protodiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of the storage. Only optimizers and initialisers should
  /// write through this; ops treat tensors as immutable.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  /// True for tensors that take part in gradient computation: leaves that
  /// require grad, and op outputs that carry a graph node.
  bool tracked() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  /// Copy of the values with no graph attached.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  // Internal plumbing used by the op implementations.
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Runs reverse-mode differentiation from a scalar loss. Every tracked leaf
/// reachable from the loss accumulates d(loss)/d(leaf) into its grad. The
/// graph is consumed; a second call on the same loss throws.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Elementwise ops. Binary ops broadcast numpy-style (trailing axes aligned,
// size-1 axes stretched).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double k) { return scale(a, k); }
inline Tensor operator*(double k, const Tensor& a) { return scale(a, k); }

Shape broadcast_shape(const Shape& a, const Shape& b);

// ---------------------------------------------------------------------------
// Linear algebra and convolution.

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// input [B,C,H,W], kernel [O,C,k,k] -> [B,O,H',W'] with
/// H' = (H + 2*padding - k) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride = 1,
              std::size_t padding = 0);

/// 2x2 average pooling with stride 2 on [B,C,H,W]; H and W must be even.
Tensor avg_pool2x(const Tensor& input);
/// Nearest-neighbour 2x upsampling on [B,C,H,W].
Tensor upsample2x(const Tensor& input);

// ---------------------------------------------------------------------------
// Reductions.

/// Sums over the listed axes; an empty list reduces everything to a scalar.
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes = {},
           bool keepdim = false);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes = {},
            bool keepdim = false);

struct MaxResult {
  Tensor values;
  /// Position of the maximum along the reduced axis for every output
  /// element (or the flat index when reducing everything). Ties resolve to
  /// the smallest index.
  std::vector<std::size_t> indices;
};

/// Max over one axis (keepdim = false).
MaxResult max(const Tensor& a, std::size_t axis);
/// Max over all elements; values is a scalar and indices holds one flat index.
MaxResult max(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);

// ---------------------------------------------------------------------------
// Shape ops.

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Gathers elements by flat index into a 1-D tensor.
Tensor take(const Tensor& a, const std::vector<std::size_t>& flat_indices);
/// [B,C,H,W] -> [B*H*W, C], row order (b, h, w).
Tensor nchw_to_rows(const Tensor& a);

/// mean((a - b)^2).
Tensor mse_loss(const Tensor& a, const Tensor& b);

}  // namespace protodiff
