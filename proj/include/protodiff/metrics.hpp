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

// Image quality and explanation metrics. Images are [H,W] tensors (a
// [1,1,H,W] batch of one is accepted too).
//
// The perceptual distance uses a fixed-seed internal feature network, so its
// values are self-consistent across runs of this library but are NOT
// comparable with published LPIPS numbers.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "protodiff/feature_map.hpp"
#include "protodiff/nn.hpp"
#include "protodiff/tensor.hpp"

namespace protodiff::metrics {

struct MetricConfig {
  double peak = 1.0;  // L
  double k1 = 0.01;
  double k2 = 0.03;
  std::size_t ssim_window = 7;
  double psnr_cap = 100.0;
  std::array<double, 3> lpips_weights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  double c1() const { return (k1 * peak) * (k1 * peak); }
  double c2() const { return (k2 * peak) * (k2 * peak); }
  void validate() const;
};

double mse(const Tensor& x, const Tensor& x_hat);
/// 10 log10(L^2 / MSE), or the configured cap when MSE is zero.
double psnr(const Tensor& x, const Tensor& x_hat, const MetricConfig& config = {});
/// Mean of the SSIM index over all stride-1 uniform windows.
double ssim(const Tensor& x, const Tensor& x_hat, const MetricConfig& config = {});

/// Frozen three-stage conv stack (conv3x3 + ReLU, with 2x average pooling
/// between stages). Input extents must be multiples of 4.
class PerceptualNet {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5eed1e5;

  explicit PerceptualNet(std::uint64_t seed = kDefaultSeed);

  /// Channel-unit-normalised activations of the three tap layers.
  std::array<Tensor, 3> taps(const Tensor& image) const;

 private:
  Conv2dLayer stage1_, stage2_, stage3_;
};

/// sum_l w_l * mean over positions of ||phi_l(x) - phi_l(x_hat)||^2.
double lpips(const Tensor& x, const Tensor& x_hat, const PerceptualNet& net,
             const MetricConfig& config = {});

/// Pearson correlation of two equal-length vectors clamped to [0,1]; either
/// vector being constant gives 0.
double clamped_pearson(std::span<const double> a, std::span<const double> b);

/// Correlation between a prototype and the feature patch at its best
/// matching cell.
double spatial_corr(std::span<const double> prototype, const FeatureMap& map);

/// (1/m) * sum_j nis_j * corr_j.
double faithfulness(std::span<const double> nis, std::span<const double> corrs);

/// 2|A n B| / (|A| + |B|); two empty masks score 1.
double dice(const Tensor& a, const Tensor& b);

/// Binary mask of pixels >= threshold.
Tensor threshold_mask(const Tensor& image, double threshold);

/// Frechet distance between Gaussian fits of two sample sets (rows are
/// samples): ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
double frechet_distance(const std::vector<std::vector<double>>& feats_a,
                        const std::vector<std::vector<double>>& feats_b);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1), 0 for n < 2
};

Summary summarize(std::span<const double> values);

}  // namespace protodiff::metrics
