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

// Mask-conditioned DDPM: noise schedule, forward process, the noise
// prediction network, the training objective and ancestral sampling.
//
// Timesteps are zero-based: t = 0 is the last reverse step (the one that
// adds no noise) and t = T-1 the first.

#pragma once

#include <cstddef>
#include <vector>

#include "protodiff/nn.hpp"
#include "protodiff/optim.hpp"
#include "protodiff/rng.hpp"
#include "protodiff/tensor.hpp"

namespace protodiff::diffusion {

struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha

  std::size_t steps() const { return beta.size(); }
};

/// Linear beta schedule from beta_start to beta_end over `steps` entries.
NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end);

/// One forward transition: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * eps.
Tensor q_step(const Tensor& x_prev, std::size_t t, const NoiseSchedule& schedule, Rng& rng);

/// Closed-form marginal: sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
Tensor q_sample(const Tensor& x0, std::size_t t, const NoiseSchedule& schedule, const Tensor& eps);

/// Batched closed form for [B,...] tensors with one timestep per item.
Tensor q_sample(const Tensor& x0, const std::vector<std::size_t>& t, const NoiseSchedule& schedule,
                const Tensor& eps);

/// Anything that predicts the noise in x_t given the timestep and mask.
/// Inputs are [B,1,H,W] with one timestep per batch item.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Tensor predict_noise(const Tensor& x_t, const std::vector<std::size_t>& t,
                               const Tensor& mask) const = 0;
};

struct DenoiserConfig {
  std::size_t image_size = 32;
  std::size_t base_width = 32;
  std::size_t time_dim = 64;
  /// Scale of the output layer's initial weights; small values make the
  /// untrained net predict near-zero noise.
  double output_gain = 0.1;
};

/// Two-level U-Net. The binary mask is concatenated with the noisy image at
/// the input; a sinusoidal timestep embedding passes through a shared MLP and
/// is added per level after a linear projection to that level's width.
class DenoiserNet final : public NoisePredictor {
 public:
  DenoiserNet(DenoiserConfig config, Rng& rng);

  Tensor predict_noise(const Tensor& x_t, const std::vector<std::size_t>& t,
                       const Tensor& mask) const override;

  const DenoiserConfig& config() const { return config_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

 private:
  DenoiserConfig config_;
  LinearLayer time_mlp_;
  LinearLayer time_proj1_;
  LinearLayer time_proj2_;
  Conv2dLayer enc1a_, enc1b_;
  Conv2dLayer enc2a_, enc2b_;
  Conv2dLayer dec1a_, dec1b_;
  Conv2dLayer out_;
  ParameterSet params_;
};

/// Sinusoidal embedding [B, dim] of integer timesteps.
Tensor timestep_embedding(const std::vector<std::size_t>& t, std::size_t dim);

struct Batch {
  Tensor images;  // [B,1,H,W], values in [0,1]
  Tensor masks;   // [B,1,H,W], values in {0,1}
};

/// Noise-prediction objective mean((eps - eps_hat)^2) at fixed timesteps and
/// noise. Returns a tracked scalar when the net's parameters require grad.
Tensor noise_prediction_loss(const NoisePredictor& net, const Batch& batch,
                             const std::vector<std::size_t>& t, const Tensor& eps,
                             const NoiseSchedule& schedule);

/// Samples t and eps, evaluates the objective, backpropagates and applies
/// one optimizer step. A non-finite loss aborts before the update.
double train_step(DenoiserNet& net, const Batch& batch, const NoiseSchedule& schedule,
                  Rng& rng, Adam& optimizer);

/// One reverse transition with fixed variance sigma_t^2 = beta_t. x_t and
/// mask are [H,W]; t = 0 returns the mean exactly.
Tensor p_sample_step(const NoisePredictor& net, const Tensor& x_t, std::size_t t,
                     const Tensor& mask, const NoiseSchedule& schedule, Rng& rng);

struct TrajectoryFrame {
  std::size_t t = 0;
  Tensor x_t;      // input to the reverse step at t, [H,W]
  Tensor eps_hat;  // predicted noise at t, [H,W]
  double eps_mag = 0.0;
};

struct SampleOptions {
  bool record = false;
  std::size_t stride = 1;
};

struct SampleResult {
  Tensor image;  // [H,W], clamped to [0,1]
  std::vector<TrajectoryFrame> frames;
};

/// Ancestral sampling from x_T ~ N(0, I) down to t = 0, conditioned on a
/// binary [H,W] mask.
SampleResult sample(const NoisePredictor& net, const Tensor& mask, const NoiseSchedule& schedule,
                    Rng& rng, SampleOptions options = {});

/// Frames at t = T-1, T-1-stride, ... plus t = 0, ordered by decreasing t.
std::vector<TrajectoryFrame> trajectory(const NoisePredictor& net, const Tensor& mask,
                                        const NoiseSchedule& schedule, Rng& rng,
                                        std::size_t stride);

/// Whether a frame is recorded at t for the given stride.
bool records_frame(std::size_t t, std::size_t steps, std::size_t stride);

}  // namespace protodiff::diffusion
