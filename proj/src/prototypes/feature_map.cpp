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

#include "protodiff/feature_map.hpp"

#include "protodiff/error.hpp"

namespace protodiff {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kShapeMismatch,
          "vector dimensions differ: " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

CellMatch best_match(const FeatureMap& map, std::span<const double> prototype) {
  require(map.cells() > 0, ErrorKind::kInvalidArgument, "empty feature map");
  require(prototype.size() == map.depth, ErrorKind::kShapeMismatch,
          "prototype dimension " + std::to_string(prototype.size()) +
              " differs from feature depth " + std::to_string(map.depth));
  std::size_t best = 0;
  double best_distance = squared_distance(map.cell(0), prototype);
  for (std::size_t i = 1; i < map.cells(); ++i) {
    const double d = squared_distance(map.cell(i), prototype);
    if (d < best_distance) {
      best_distance = d;
      best = i;
    }
  }
  return {-best_distance, best / map.width, best % map.width};
}

}  // namespace protodiff
