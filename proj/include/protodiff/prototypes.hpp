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


// Prototype heads over a shared frozen feature extractor: PPNet, EPPNet
// (PPNet plus a diversity term) and ProtoPool (soft prototype pooling).
//
// Plain functions over FeatureMap compute the per-image quantities used by
// explanations and tests; the *_objective functions build the same losses as
// tracked tensors for training and gradient checks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "protodiff/feature_map.hpp"
#include "protodiff/nn.hpp"
#include "protodiff/rng.hpp"
#include "protodiff/tensor.hpp"

namespace protodiff::prototypes {

enum class HeadKind { kPPNet, kEPPNet, kProtoPool };

std::string to_string(HeadKind head);
/// Parses "ppnet", "eppnet" or "protopool".
HeadKind parse_head(const std::string& name);
/// Whether the head ends training with a push and needs provenance.
bool requires_push(HeadKind head);

// ---------------------------------------------------------------------------
// Feature extractor.

struct ExtractorConfig {
  std::size_t depth = 16;  // D
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
};

/// Convolutional encoder image [H,W] -> f(x) on an (H/4) x (W/4) grid of
/// depth D. Trained as the encoder half of an autoencoder.
class FeatureExtractor {
 public:
  FeatureExtractor(ExtractorConfig config, Rng& rng);

  /// [B,1,H,W] -> [B,D,H/4,W/4], tracked when parameters require grad.
  Tensor encode(const Tensor& images) const;
  /// Encoder followed by the training-only decoder, [B,1,H,W] -> same shape.
  Tensor reconstruct(const Tensor& images) const;

  /// Feature map of one [H,W] image.
  FeatureMap features(const Tensor& image) const;
  std::vector<FeatureMap> features(const std::vector<Tensor>& images) const;

  /// Drops the decoder and stops gradient tracking on the encoder.
  void freeze();
  bool frozen() const { return frozen_; }

  const ExtractorConfig& config() const { return config_; }
  /// Encoder parameters (plus decoder ones while not frozen).
  const ParameterSet& parameters() const { return params_; }

  void save(const std::filesystem::path& path) const;
  /// Loads a frozen extractor written by save().
  static FeatureExtractor load(const std::filesystem::path& path, ExtractorConfig config);

 private:
  ExtractorConfig config_;
  Conv2dLayer enc1_, enc2_, enc3_;
  Conv2dLayer dec1_, dec2_, dec3_;
  ParameterSet params_;
  bool frozen_ = false;

  void register_params();
};

struct ExtractorTraining {
  FeatureExtractor extractor;
  double initial_loss = 0.0;  // reconstruction MSE over the dataset at init
  double final_loss = 0.0;    // after training
};

/// Trains encoder + decoder on reconstruction MSE, then freezes. Images are
/// [H,W] with H and W divisible by 4.
ExtractorTraining train_extractor(const std::vector<Tensor>& images, const ExtractorConfig& config,
                                  Rng& rng);

// ---------------------------------------------------------------------------
// Prototype bank.

struct PatchSource {
  std::string image_id;
  std::size_t h = 0;
  std::size_t w = 0;
};

struct PrototypeBank {
  HeadKind head = HeadKind::kPPNet;
  Tensor prototypes;  // [m, D]
  std::vector<std::optional<PatchSource>> provenance;
  double lambda_div = 0.1;

  std::size_t size() const { return prototypes.dim(0); }
  std::size_t depth() const { return prototypes.dim(1); }
  std::span<const double> prototype(std::size_t j) const;
  /// Checks m >= 1, finite values and a provenance slot per prototype.
  void validate() const;
};

/// Bank with prototypes copied from m randomly chosen training patches.
PrototypeBank init_bank(HeadKind head, std::size_t m, const std::vector<FeatureMap>& maps,
                        Rng& rng, double lambda_div = 0.1);

/// s_hw = -||f_hw - p||^2 for every cell, row-major.
std::vector<double> similarity_map(const FeatureMap& map, std::span<const double> prototype);
/// g = max_hw s_hw and its cell; ties go to the smallest row-major index.
CellMatch max_similarity(const FeatureMap& map, std::span<const double> prototype);
/// g_j for every prototype of the bank.
std::vector<double> similarity_scores(const PrototypeBank& bank, const FeatureMap& map);

/// Index sets X_j: each image joins the prototype with the largest g_j
/// (ties to the smaller j). A prototype left without images is given the
/// image on which its g_j is largest.
std::vector<std::vector<std::size_t>> assign_samples(const PrototypeBank& bank,
                                                     const std::vector<FeatureMap>& maps);

/// sum_j min_{x in X_j} ||p_j - f(x)_{h*,w*}||^2 with (h*,w*) the best cell
/// of p_j on x. Every X_j must be non-empty.
double alignment_loss(const PrototypeBank& bank, const std::vector<FeatureMap>& maps,
                      const std::vector<std::vector<std::size_t>>& assigned);

/// Mean over images of the distance from the image's closest patch to its
/// closest prototype.
double cluster_cost(const PrototypeBank& bank, const std::vector<FeatureMap>& maps);

/// Softmax of g with max subtraction.
std::vector<double> nis(std::span<const double> g);

/// Sum over ordered pairs i != j of exp(-||p_i - p_j||^2). Fewer than two
/// prototypes give 0 and a warning on stderr.
double diversity_loss(const PrototypeBank& bank);

struct PoolAssignment {
  std::vector<double> alpha;  // [cells, m], row-major
  FeatureMap pooled;          // z, same grid and depth as the input map
};

/// alpha_ij = softmax_j(-||f_i - p_j||^2), z_i = sum_j alpha_ij p_j.
PoolAssignment pool_assign(const FeatureMap& map, const PrototypeBank& bank);

/// Mean over cells of ||f_i - z_i||^2 across all maps.
double pool_reconstruction_loss(const PrototypeBank& bank, const std::vector<FeatureMap>& maps);

// ---------------------------------------------------------------------------
// Tracked objectives. `features` rows are the cells of every image in order,
// [images * cells, D]; `prototypes` is [m, D].

/// [N, m] squared distances between feature rows and prototypes.
Tensor squared_distances(const Tensor& features, const Tensor& prototypes);
Tensor diversity_objective(const Tensor& prototypes);
/// Cluster cost plus alignment loss for fixed assignment sets.
Tensor ppnet_objective(const Tensor& prototypes, const Tensor& features, std::size_t cells,
                       const std::vector<std::vector<std::size_t>>& assigned);
Tensor eppnet_objective(const Tensor& prototypes, const Tensor& features, std::size_t cells,
                        const std::vector<std::vector<std::size_t>>& assigned, double lambda_div);
Tensor protopool_objective(const Tensor& prototypes, const Tensor& features);

/// Stacks the cells of all maps into an [images * cells, D] tensor.
Tensor feature_rows(const std::vector<FeatureMap>& maps);

// ---------------------------------------------------------------------------
// Training, push and explanation.

struct HeadConfig {
  std::size_t prototypes = 10;  // m
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
  double lambda_div = 0.1;
};

struct HeadTraining {
  PrototypeBank bank;
  double initial_objective = 0.0;
  double final_objective = 0.0;  // before the push, on the last assignment
  Tensor learned;                // [m, D] prototypes before the push
};

/// Trains one head on the feature maps of the training images. PPNet and
/// EPPNet finish with push_prototypes; ProtoPool keeps its soft prototypes.
HeadTraining train_head(HeadKind head, const std::vector<FeatureMap>& maps,
                        const std::vector<std::string>& image_ids, const HeadConfig& config,
                        Rng& rng);

/// Replaces each prototype by its nearest training patch over all images and
/// cells (ties to the smallest image index, then cell index) and records the
/// source.
PrototypeBank push_prototypes(PrototypeBank bank, const std::vector<FeatureMap>& maps,
                              const std::vector<std::string>& image_ids);

struct InfluenceRecord {
  std::size_t prototype = 0;
  double g = 0.0;
  double nis = 0.0;
  double corr = 0.0;
  std::optional<PatchSource> source;
  std::size_t h = 0;  // matched cell in the explained image
  std::size_t w = 0;
};

struct ExplanationReport {
  std::string image_id;
  HeadKind head = HeadKind::kPPNet;
  std::size_t m = 0;
  std::vector<InfluenceRecord> records;  // sorted by NIS, descending
  double faithfulness = 0.0;
};

ExplanationReport explain(const PrototypeBank& bank, const FeatureMap& map,
                          const std::string& image_id);

nlohmann::json to_json(const ExplanationReport& report);
ExplanationReport report_from_json(const nlohmann::json& json);

/// Writes <stem>.ckpt (prototype tensor) and <stem>.json (head, lambda and
/// provenance table).
void save_bank(const std::filesystem::path& stem, const PrototypeBank& bank);
PrototypeBank load_bank(const std::filesystem::path& stem);

}  // namespace protodiff::prototypes
