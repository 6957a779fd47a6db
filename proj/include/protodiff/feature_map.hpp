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

#include <cstddef>
#include <span>
#include <vector>

namespace protodiff {

/// H x W grid of D-dimensional feature vectors, cell (h, w) stored at
/// offset (h * W + w) * D.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t depth = 0;
  std::vector<double> values;

  std::size_t cells() const { return height * width; }
  std::span<const double> cell(std::size_t index) const {
    return {values.data() + index * depth, depth};
  }
  std::span<const double> cell(std::size_t h, std::size_t w) const { return cell(h * width + w); }
};

double squared_distance(std::span<const double> a, std::span<const double> b);

struct CellMatch {
  double similarity = 0.0;  // -||f_hw - p||^2 at the best cell
  std::size_t h = 0;
  std::size_t w = 0;
};

/// Most similar cell to `prototype`; ties go to the smallest row-major index.
CellMatch best_match(const FeatureMap& map, std::span<const double> prototype);

}  // namespace protodiff
