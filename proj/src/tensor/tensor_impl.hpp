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

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "protodiff/tensor.hpp"

namespace protodiff::detail {

/// Receives the output gradient and one sink per input (null when that
/// input is not tracked). Implementations accumulate into the sinks.
using BackwardFn = std::function<void(const std::vector<double>& grad_out,
                                      const std::vector<std::vector<double>*>& sinks)>;

struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;
  std::shared_ptr<Node> node;

  bool tracked() const { return requires_grad || node != nullptr; }
};

/// Builds an op output: validates finiteness and, when recording, attaches a
/// node holding the inputs and the backward rule.
Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   const std::vector<Tensor>& inputs, BackwardFn fn);

/// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c);

}  // namespace protodiff::detail
