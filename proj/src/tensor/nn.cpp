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

#include "protodiff/nn.hpp"

#include <algorithm>
#include <cmath>

#include "protodiff/error.hpp"

namespace protodiff {

void ParameterSet::add(std::string name, Tensor tensor) {
  require(!contains(name), ErrorKind::kInvalidArgument, "duplicate parameter name " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& [key, tensor] : entries_) {
    if (key == name) return tensor;
  }
  fail(ErrorKind::kInvalidArgument, "unknown parameter " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& entry) { return entry.first == name; });
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& entry : entries_) out.push_back(entry.second);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& entry : entries_) n += entry.second.numel();
  return n;
}

void ParameterSet::assign_from(const ParameterSet& source) {
  require(source.size() == size(), ErrorKind::kFormat,
          "parameter count mismatch: expected " + std::to_string(size()) + ", got " +
              std::to_string(source.size()));
  for (auto& [name, tensor] : entries_) {
    require(source.contains(name), ErrorKind::kFormat, "checkpoint lacks parameter " + name);
    const auto& other = source.get(name);
    require(other.shape() == tensor.shape(), ErrorKind::kFormat,
            "shape mismatch for " + name + ": " + shape_string(tensor.shape()) + " vs " +
                shape_string(other.shape()));
    auto dst = tensor.mutable_data();
    std::copy(other.data().begin(), other.data().end(), dst.begin());
  }
}

Conv2dLayer Conv2dLayer::create(std::size_t in, std::size_t out, std::size_t ksize, Rng& rng,
                                double gain) {
  const double fan_in = static_cast<double>(in * ksize * ksize);
  Conv2dLayer layer;
  layer.weight = Tensor::randn({out, in, ksize, ksize}, rng, gain * std::sqrt(2.0 / fan_in), true);
  layer.bias = Tensor::zeros({1, out, 1, 1}, true);
  layer.padding = ksize / 2;
  return layer;
}

Tensor Conv2dLayer::operator()(const Tensor& input) const {
  return add(conv2d(input, weight, 1, padding), bias);
}

void Conv2dLayer::register_into(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

LinearLayer LinearLayer::create(std::size_t in, std::size_t out, Rng& rng, double gain) {
  LinearLayer layer;
  layer.weight =
      Tensor::randn({in, out}, rng, gain * std::sqrt(1.0 / static_cast<double>(in)), true);
  layer.bias = Tensor::zeros({1, out}, true);
  return layer;
}

Tensor LinearLayer::operator()(const Tensor& input) const {
  return add(matmul(input, weight), bias);
}

void LinearLayer::register_into(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

}  // namespace protodiff
