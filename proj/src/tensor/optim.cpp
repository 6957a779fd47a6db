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

#include "protodiff/optim.hpp"

#include <algorithm>
#include <cmath>

#include "protodiff/error.hpp"

namespace protodiff {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  require(options_.learning_rate > 0.0, ErrorKind::kInvalidArgument,
          "learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require(params_[i].has_grad(), ErrorKind::kState,
            "adam step on parameter " + std::to_string(i) + " without a gradient");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto grad = params_[i].grad();
    auto values = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * grad[k];
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      values[k] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
    params_[i].clear_grad();
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.clear_grad();
}

namespace {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double step, double floor) {
  Tensor x = point.detach();
  x.set_requires_grad(true);
  Tensor loss = fn(x);
  backward(loss);
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor plus = point.detach();
    Tensor minus = point.detach();
    plus.mutable_data()[i] += step;
    minus.mutable_data()[i] -= step;
    const double numeric = (fn(plus).item() - fn(minus).item()) / (2.0 * step);
    const double rel = relative_error(analytic[i], numeric, floor);
    const double abs_err = std::abs(analytic[i] - numeric);
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = i;
    }
    report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
    ++report.evaluated;
  }
  return report;
}

GradCheckReport grad_check_param(const std::function<Tensor()>& loss_fn, Tensor param,
                                 const std::vector<std::size_t>& coordinates, double step,
                                 double floor) {
  param.clear_grad();
  Tensor loss = loss_fn();
  backward(loss);
  require(param.has_grad(), ErrorKind::kState, "parameter received no gradient");
  std::vector<double> analytic(param.grad().begin(), param.grad().end());
  param.clear_grad();

  std::vector<std::size_t> coords = coordinates;
  if (coords.empty()) {
    coords.resize(param.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  }
  GradCheckReport report;
  NoGradGuard no_grad;
  auto values = param.mutable_data();
  for (auto i : coords) {
    const double original = values[i];
    values[i] = original + step;
    const double up = loss_fn().item();
    values[i] = original - step;
    const double down = loss_fn().item();
    values[i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = relative_error(analytic[i], numeric, floor);
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = i;
    }
    report.max_absolute_error = std::max(report.max_absolute_error, std::abs(analytic[i] - numeric));
    ++report.evaluated;
  }
  return report;
}

}  // namespace protodiff
