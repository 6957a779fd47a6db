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

#include <cstdint>
#include <functional>
#include <vector>

#include "protodiff/tensor.hpp"

namespace protodiff {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Holds per-parameter moments; parameters are
/// updated in place through their shared storage.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  /// Applies one update and clears the parameter grads. Throws kState if a
  /// parameter has no gradient.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t evaluated = 0;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

/// Compares autodiff against central differences for a scalar function of
/// one tensor. Relative error per coordinate is |a - n| / max(|a|, |n|, floor);
/// the floor turns it into an absolute error for near-zero gradients.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double step = 1e-5, double floor = 1e-3);

/// Variant for functions of an existing parameter (e.g. one network weight):
/// perturbs `param` in place, restoring it afterwards. Only the listed
/// coordinates are checked (all of them when empty).
GradCheckReport grad_check_param(const std::function<Tensor()>& loss_fn, Tensor param,
                                 const std::vector<std::size_t>& coordinates = {},
                                 double step = 1e-5, double floor = 1e-3);

}  // namespace protodiff
