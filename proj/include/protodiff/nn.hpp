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

#include <string>
#include <utility>
#include <vector>

#include "protodiff/rng.hpp"
#include "protodiff/tensor.hpp"

namespace protodiff {

/// Ordered collection of named trainable tensors.
class ParameterSet {
 public:
  void add(std::string name, Tensor tensor);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<Tensor> tensors() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  /// Copies values from `source` into the tensors of this set. Names and
  /// shapes must match one to one.
  void assign_from(const ParameterSet& source);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// 3x3 (or kxk) same-padding convolution with a per-channel bias.
struct Conv2dLayer {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [1, out, 1, 1]
  std::size_t padding = 0;

  static Conv2dLayer create(std::size_t in, std::size_t out, std::size_t ksize, Rng& rng,
                            double gain = 1.0);
  Tensor operator()(const Tensor& input) const;
  void register_into(ParameterSet& params, const std::string& prefix) const;
};

struct LinearLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [1, out]

  static LinearLayer create(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
  Tensor operator()(const Tensor& input) const;
  void register_into(ParameterSet& params, const std::string& prefix) const;
};

}  // namespace protodiff
