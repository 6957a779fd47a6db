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


#include <algorithm>
#include <cmath>
#include <iostream>

#include "protodiff/error.hpp"
#include "protodiff/prototypes.hpp"

namespace protodiff::prototypes {

std::string to_string(HeadKind head) {
  switch (head) {
    case HeadKind::kPPNet:
      return "ppnet";
    case HeadKind::kEPPNet:
      return "eppnet";
    case HeadKind::kProtoPool:
      return "protopool";
  }
  return "unknown";
}

HeadKind parse_head(const std::string& name) {
  if (name == "ppnet") return HeadKind::kPPNet;
  if (name == "eppnet") return HeadKind::kEPPNet;
  if (name == "protopool") return HeadKind::kProtoPool;
  fail(ErrorKind::kConfig, "unknown head '" + name + "' (expected ppnet, eppnet or protopool)");
}

bool requires_push(HeadKind head) { return head != HeadKind::kProtoPool; }

std::span<const double> PrototypeBank::prototype(std::size_t j) const {
  require(j < size(), ErrorKind::kInvalidArgument, "prototype index out of range");
  return prototypes.data().subspan(j * depth(), depth());
}

void PrototypeBank::validate() const {
  require(prototypes.rank() == 2 && prototypes.dim(0) >= 1 && prototypes.dim(1) >= 1,
          ErrorKind::kShapeMismatch, "prototype bank must be [m, D] with m >= 1");
  for (double v : prototypes.data()) {
    require(std::isfinite(v), ErrorKind::kNonFinite, "prototype bank holds a non-finite value");
  }
  require(provenance.size() == size(), ErrorKind::kState,
          "provenance table size differs from prototype count");
}

PrototypeBank init_bank(HeadKind head, std::size_t m, const std::vector<FeatureMap>& maps,
                        Rng& rng, double lambda_div) {
  require(m >= 1, ErrorKind::kConfig, "need at least one prototype");
  require(!maps.empty() && maps.front().cells() > 0, ErrorKind::kInvalidArgument,
          "prototype initialisation needs training features");
  const std::size_t cells = maps.front().cells();
  const std::size_t depth = maps.front().depth;
  const std::size_t total = maps.size() * cells;

  // Partial Fisher-Yates over all patches: distinct patches while m <= total.
  std::vector<std::size_t> pool(total);
  for (std::size_t i = 0; i < total; ++i) pool[i] = i;
  std::vector<double> values;
  values.reserve(m * depth);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t k = j % total;
    if (k == 0 && j > 0) {
      for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    }
    std::swap(pool[k], pool[k + rng.index(total - k)]);
    const auto cell = maps[pool[k] / cells].cell(pool[k] % cells);
    values.insert(values.end(), cell.begin(), cell.end());
  }
  PrototypeBank bank;
  bank.head = head;
  bank.prototypes = Tensor::from({m, depth}, std::move(values));
  bank.provenance.assign(m, std::nullopt);
  bank.lambda_div = lambda_div;
  return bank;
}

std::vector<double> similarity_map(const FeatureMap& map, std::span<const double> prototype) {
  require(prototype.size() == map.depth, ErrorKind::kShapeMismatch,
          "prototype dimension " + std::to_string(prototype.size()) +
              " differs from feature depth " + std::to_string(map.depth));
  std::vector<double> out(map.cells());
  for (std::size_t i = 0; i < map.cells(); ++i) out[i] = -squared_distance(map.cell(i), prototype);
  return out;
}

CellMatch max_similarity(const FeatureMap& map, std::span<const double> prototype) {
  return best_match(map, prototype);
}

std::vector<double> similarity_scores(const PrototypeBank& bank, const FeatureMap& map) {
  std::vector<double> g(bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) g[j] = best_match(map, bank.prototype(j)).similarity;
  return g;
}

std::vector<std::vector<std::size_t>> assign_samples(const PrototypeBank& bank,
                                                     const std::vector<FeatureMap>& maps) {
  require(!maps.empty(), ErrorKind::kInvalidArgument, "no samples to assign");
  const std::size_t m = bank.size();
  std::vector<std::vector<double>> g(maps.size());
  std::vector<std::vector<std::size_t>> assigned(m);
  for (std::size_t x = 0; x < maps.size(); ++x) {
    g[x] = similarity_scores(bank, maps[x]);
    const auto best = std::max_element(g[x].begin(), g[x].end()) - g[x].begin();
    assigned[static_cast<std::size_t>(best)].push_back(x);
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (!assigned[j].empty()) continue;
    std::size_t best = 0;
    for (std::size_t x = 1; x < maps.size(); ++x) {
      if (g[x][j] > g[best][j]) best = x;
    }
    assigned[j].push_back(best);
  }
  return assigned;
}

double alignment_loss(const PrototypeBank& bank, const std::vector<FeatureMap>& maps,
                      const std::vector<std::vector<std::size_t>>& assigned) {
  require(assigned.size() == bank.size(), ErrorKind::kShapeMismatch,
          "one assignment set per prototype required");
  double total = 0.0;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    require(!assigned[j].empty(), ErrorKind::kInvalidArgument,
            "prototype " + std::to_string(j) + " has no assigned samples");
    double best = 0.0;
    for (std::size_t k = 0; k < assigned[j].size(); ++k) {
      const std::size_t x = assigned[j][k];
      require(x < maps.size(), ErrorKind::kInvalidArgument, "assigned sample out of range");
      const double d = -best_match(maps[x], bank.prototype(j)).similarity;
      best = k == 0 ? d : std::min(best, d);
    }
    total += best;
  }
  return total;
}

double cluster_cost(const PrototypeBank& bank, const std::vector<FeatureMap>& maps) {
  require(!maps.empty(), ErrorKind::kInvalidArgument, "cluster cost of an empty set");
  double total = 0.0;
  for (const auto& map : maps) {
    const auto g = similarity_scores(bank, map);
    total += -*std::max_element(g.begin(), g.end());
  }
  return total / static_cast<double>(maps.size());
}

std::vector<double> nis(std::span<const double> g) {
  require(!g.empty(), ErrorKind::kInvalidArgument, "NIS needs at least one score");
  for (double v : g) require(std::isfinite(v), ErrorKind::kNonFinite, "non-finite similarity");
  const double top = *std::max_element(g.begin(), g.end());
  std::vector<double> out(g.size());
  double total = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) total += (out[j] = std::exp(g[j] - top));
  for (auto& v : out) v /= total;
  return out;
}

double diversity_loss(const PrototypeBank& bank) {
  const std::size_t m = bank.size();
  if (m < 2) {
    std::cerr << "warning: diversity loss needs at least two prototypes; returning 0\n";
    return 0.0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j) total += std::exp(-squared_distance(bank.prototype(i), bank.prototype(j)));
    }
  }
  return total;
}

PoolAssignment pool_assign(const FeatureMap& map, const PrototypeBank& bank) {
  require(map.depth == bank.depth(), ErrorKind::kShapeMismatch,
          "feature depth differs from prototype dimension");
  const std::size_t m = bank.size(), depth = map.depth;
  PoolAssignment out;
  out.alpha.resize(map.cells() * m);
  out.pooled = {map.height, map.width, depth, std::vector<double>(map.cells() * depth, 0.0)};
  std::vector<double> logits(m);
  for (std::size_t i = 0; i < map.cells(); ++i) {
    for (std::size_t j = 0; j < m; ++j) logits[j] = -squared_distance(map.cell(i), bank.prototype(j));
    const auto weights = nis(logits);
    for (std::size_t j = 0; j < m; ++j) {
      out.alpha[i * m + j] = weights[j];
      const auto p = bank.prototype(j);
      for (std::size_t d = 0; d < depth; ++d) out.pooled.values[i * depth + d] += weights[j] * p[d];
    }
  }
  return out;
}

double pool_reconstruction_loss(const PrototypeBank& bank, const std::vector<FeatureMap>& maps) {
  require(!maps.empty(), ErrorKind::kInvalidArgument, "reconstruction loss of an empty set");
  double total = 0.0;
  std::size_t cells = 0;
  for (const auto& map : maps) {
    const auto pooled = pool_assign(map, bank).pooled;
    for (std::size_t i = 0; i < map.cells(); ++i) total += squared_distance(map.cell(i), pooled.cell(i));
    cells += map.cells();
  }
  return total / static_cast<double>(cells);
}

// ---------------------------------------------------------------------------

Tensor feature_rows(const std::vector<FeatureMap>& maps) {
  require(!maps.empty(), ErrorKind::kInvalidArgument, "no feature maps");
  const std::size_t cells = maps.front().cells(), depth = maps.front().depth;
  std::vector<double> values;
  values.reserve(maps.size() * cells * depth);
  for (const auto& map : maps) {
    require(map.cells() == cells && map.depth == depth, ErrorKind::kShapeMismatch,
            "feature maps differ in grid or depth");
    values.insert(values.end(), map.values.begin(), map.values.end());
  }
  return Tensor::from({maps.size() * cells, depth}, std::move(values));
}

Tensor squared_distances(const Tensor& features, const Tensor& prototypes) {
  require(features.rank() == 2 && prototypes.rank() == 2 && features.dim(1) == prototypes.dim(1),
          ErrorKind::kShapeMismatch,
          "feature rows " + shape_string(features.shape()) + " and prototypes " +
              shape_string(prototypes.shape()) + " differ in depth");
  const std::size_t n = features.dim(0), m = prototypes.dim(0), d = features.dim(1);
  auto diff = sub(reshape(features, {n, 1, d}), reshape(prototypes, {1, m, d}));
  return sum(square(diff), {2});
}

Tensor diversity_objective(const Tensor& prototypes) {
  const std::size_t m = prototypes.dim(0);
  if (m < 2) return Tensor::scalar(0.0);
  // The diagonal contributes exp(0) = 1 per prototype with zero gradient.
  return add_scalar(sum(exp(neg(squared_distances(prototypes, prototypes)))),
                    -static_cast<double>(m));
}

Tensor ppnet_objective(const Tensor& prototypes, const Tensor& features, std::size_t cells,
                       const std::vector<std::vector<std::size_t>>& assigned) {
  const std::size_t m = prototypes.dim(0);
  require(cells >= 1 && features.dim(0) % cells == 0, ErrorKind::kShapeMismatch,
          "feature rows are not a whole number of images");
  require(assigned.size() == m, ErrorKind::kShapeMismatch,
          "one assignment set per prototype required");
  const std::size_t images = features.dim(0) / cells;
  auto sim = neg(reshape(squared_distances(features, prototypes), {images, cells, m}));
  auto g = max(sim, 1).values;  // [images, m]
  auto cluster = neg(mean(max(g, 1).values));
  auto g_flat = reshape(g, {images * m});
  Tensor alignment = Tensor::scalar(0.0);
  for (std::size_t j = 0; j < m; ++j) {
    require(!assigned[j].empty(), ErrorKind::kInvalidArgument,
            "prototype " + std::to_string(j) + " has no assigned samples");
    std::vector<std::size_t> idx;
    for (std::size_t x : assigned[j]) {
      require(x < images, ErrorKind::kInvalidArgument, "assigned sample out of range");
      idx.push_back(x * m + j);
    }
    alignment = sub(alignment, max(take(g_flat, idx)).values);
  }
  return add(cluster, alignment);
}

Tensor eppnet_objective(const Tensor& prototypes, const Tensor& features, std::size_t cells,
                        const std::vector<std::vector<std::size_t>>& assigned, double lambda_div) {
  return add(ppnet_objective(prototypes, features, cells, assigned),
             scale(diversity_objective(prototypes), lambda_div));
}

Tensor protopool_objective(const Tensor& prototypes, const Tensor& features) {
  const std::size_t n = features.dim(0);
  auto alpha = softmax(neg(squared_distances(features, prototypes)), 1);
  auto pooled = matmul(alpha, prototypes);
  return scale(sum(square(sub(features, pooled))), 1.0 / static_cast<double>(n));
}

}  // namespace protodiff::prototypes
