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


// Experiment configuration and the eight pipeline commands. Every command
// reads and writes artifacts under the configured output directory; see
// docs/formats.md for the file layout.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protodiff/metrics.hpp"
#include "protodiff/prototypes.hpp"

namespace protodiff::harness {

struct DataSection {
  std::size_t count = 256;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  double background = 0.0;
  double texture_amplitude = 0.05;
  double noise_floor = 0.01;
};

struct DiffusionSection {
  std::size_t steps = 1000;  // T
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t base_width = 32;
  std::size_t time_dim = 64;
  double output_gain = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
};

struct SamplingSection {
  std::size_t count = 8;
  std::size_t trajectory_stride = 50;
};

struct PrototypeSection {
  std::vector<prototypes::HeadKind> heads{prototypes::HeadKind::kPPNet,
                                          prototypes::HeadKind::kEPPNet,
                                          prototypes::HeadKind::kProtoPool};
  std::size_t m = 10;
  double lambda_div = 0.1;
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
  std::size_t feature_depth = 16;
  std::size_t extractor_epochs = 30;
  std::size_t extractor_batch_size = 8;
  double extractor_learning_rate = 1e-3;
};

struct MetricSection {
  metrics::MetricConfig metric;
  double dice_threshold = 0.2;
};

struct ExperimentConfig {
  DataSection data;
  DiffusionSection diffusion;
  SamplingSection sampling;
  PrototypeSection prototypes;
  MetricSection metrics;
  std::filesystem::path output_dir = "runs/default";

  /// Cross-field checks; throws kConfig.
  void validate() const;
};

/// Parses INI text: `[section]` headers, `key = value` lines, `#` or `;`
/// comments. Unknown sections or keys, duplicates and malformed values are
/// kConfig errors naming the line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Deterministic per-purpose seed derived from the data seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Artifact locations under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path manifest() const { return data_dir() / "manifest.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path denoiser() const { return checkpoints() / "denoiser.ckpt"; }
  std::filesystem::path extractor() const { return checkpoints() / "extractor.ckpt"; }
  std::filesystem::path extractor_info() const { return checkpoints() / "extractor.json"; }
  std::filesystem::path bank(prototypes::HeadKind head) const;
  std::filesystem::path diffusion_log() const { return root / "diffusion_loss.csv"; }
  std::filesystem::path samples_dir() const { return root / "samples"; }
  std::filesystem::path samples_index() const { return samples_dir() / "samples.json"; }
  std::filesystem::path trajectory_dir() const { return root / "trajectory"; }
  std::filesystem::path explanations_dir() const { return root / "explanations"; }
  std::filesystem::path metrics_csv() const { return root / "metrics.csv"; }
  std::filesystem::path metrics_summary() const { return root / "metrics_summary.json"; }
  std::filesystem::path comparison_csv() const { return root / "comparison.csv"; }
  std::filesystem::path comparison_json() const { return root / "comparison.json"; }
  std::filesystem::path faithfulness_rows() const { return root / "faithfulness_per_image.csv"; }
  std::filesystem::path nis_rows() const { return root / "nis_per_image.csv"; }
};

/// One experiment bound to a configuration. Each command returns its
/// one-line summary.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  void set_output_dir(const std::filesystem::path& dir);
  void set_seed(std::uint64_t seed);

  std::string gen_data();
  std::string train_diffusion();
  /// count = 0 uses the configured sample count.
  std::string sample(std::size_t count = 0);
  std::string trajectory();
  /// nullopt trains every configured head.
  std::string train_proto(std::optional<prototypes::HeadKind> head = std::nullopt);
  /// Explains the listed images (generated sample ids or dataset ids); an
  /// empty list explains every generated sample.
  std::string explain(std::optional<prototypes::HeadKind> head,
                      const std::vector<std::string>& image_ids = {});
  std::string evaluate();
  std::string compare();

 private:
  ExperimentConfig config_;
  Layout layout_;
};

}  // namespace protodiff::harness
