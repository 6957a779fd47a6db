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

#include "protodiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "protodiff/error.hpp"

namespace protodiff::diffusion {

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
  require(steps >= 1, ErrorKind::kInvalidArgument, "schedule needs at least one step");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          ErrorKind::kInvalidArgument, "schedule requires 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
    s.beta[t] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = t == 0 ? s.alpha[0] : s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

namespace {

void check_timestep(std::size_t t, const NoiseSchedule& schedule) {
  require(t < schedule.steps(), ErrorKind::kInvalidArgument,
          "timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps()) +
              ")");
}

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 4) return image;
  require(image.rank() == 2, ErrorKind::kShapeMismatch,
          "expected an [H,W] image, got " + shape_string(image.shape()));
  return reshape(image, {1, 1, image.dim(0), image.dim(1)});
}

}  // namespace

Tensor q_step(const Tensor& x_prev, std::size_t t, const NoiseSchedule& schedule, Rng& rng) {
  check_timestep(t, schedule);
  auto eps = Tensor::randn(x_prev.shape(), rng);
  return add(scale(x_prev, std::sqrt(1.0 - schedule.beta[t])),
             scale(eps, std::sqrt(schedule.beta[t])));
}

Tensor q_sample(const Tensor& x0, std::size_t t, const NoiseSchedule& schedule, const Tensor& eps) {
  check_timestep(t, schedule);
  require(eps.shape() == x0.shape(), ErrorKind::kShapeMismatch,
          "noise shape " + shape_string(eps.shape()) + " differs from image " +
              shape_string(x0.shape()));
  return add(scale(x0, std::sqrt(schedule.alpha_bar[t])),
             scale(eps, std::sqrt(1.0 - schedule.alpha_bar[t])));
}

Tensor q_sample(const Tensor& x0, const std::vector<std::size_t>& t, const NoiseSchedule& schedule,
                const Tensor& eps) {
  require(eps.shape() == x0.shape(), ErrorKind::kShapeMismatch,
          "noise shape differs from image batch");
  require(x0.rank() >= 1 && x0.dim(0) == t.size(), ErrorKind::kShapeMismatch,
          "one timestep per batch item required");
  std::vector<double> signal(t.size()), noise(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    check_timestep(t[i], schedule);
    signal[i] = std::sqrt(schedule.alpha_bar[t[i]]);
    noise[i] = std::sqrt(1.0 - schedule.alpha_bar[t[i]]);
  }
  Shape coeff_shape(x0.rank(), 1);
  coeff_shape[0] = t.size();
  return add(mul(x0, Tensor::from(coeff_shape, signal)), mul(eps, Tensor::from(coeff_shape, noise)));
}

// ---------------------------------------------------------------------------

Tensor timestep_embedding(const std::vector<std::size_t>& t, std::size_t dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorKind::kInvalidArgument,
          "time embedding dimension must be even");
  const std::size_t half = dim / 2;
  std::vector<double> values(t.size() * dim);
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(half));
      const double angle = static_cast<double>(t[b]) * freq;
      values[b * dim + i] = std::sin(angle);
      values[b * dim + half + i] = std::cos(angle);
    }
  }
  return Tensor::from({t.size(), dim}, std::move(values));
}

DenoiserNet::DenoiserNet(DenoiserConfig config, Rng& rng) : config_(config) {
  require(config_.image_size >= 2 && config_.image_size % 2 == 0, ErrorKind::kInvalidArgument,
          "denoiser image size must be even");
  require(config_.base_width >= 1, ErrorKind::kInvalidArgument, "denoiser width must be >= 1");
  const std::size_t w1 = config_.base_width;
  const std::size_t w2 = 2 * config_.base_width;
  const std::size_t e = config_.time_dim;
  time_mlp_ = LinearLayer::create(e, e, rng);
  time_proj1_ = LinearLayer::create(e, w1, rng);
  time_proj2_ = LinearLayer::create(e, w2, rng);
  enc1a_ = Conv2dLayer::create(2, w1, 3, rng);
  enc1b_ = Conv2dLayer::create(w1, w1, 3, rng);
  enc2a_ = Conv2dLayer::create(w1, w2, 3, rng);
  enc2b_ = Conv2dLayer::create(w2, w2, 3, rng);
  dec1a_ = Conv2dLayer::create(w1 + w2, w1, 3, rng);
  dec1b_ = Conv2dLayer::create(w1, w1, 3, rng);
  out_ = Conv2dLayer::create(w1, 1, 1, rng, config_.output_gain);

  time_mlp_.register_into(params_, "time.mlp");
  time_proj1_.register_into(params_, "time.proj1");
  time_proj2_.register_into(params_, "time.proj2");
  enc1a_.register_into(params_, "enc1.a");
  enc1b_.register_into(params_, "enc1.b");
  enc2a_.register_into(params_, "enc2.a");
  enc2b_.register_into(params_, "enc2.b");
  dec1a_.register_into(params_, "dec1.a");
  dec1b_.register_into(params_, "dec1.b");
  out_.register_into(params_, "out");
}

Tensor DenoiserNet::predict_noise(const Tensor& x_t, const std::vector<std::size_t>& t,
                                  const Tensor& mask) const {
  require(x_t.rank() == 4 && x_t.dim(1) == 1, ErrorKind::kShapeMismatch,
          "denoiser expects [B,1,H,W] input, got " + shape_string(x_t.shape()));
  require(mask.shape() == x_t.shape(), ErrorKind::kShapeMismatch,
          "mask shape " + shape_string(mask.shape()) + " differs from input " +
              shape_string(x_t.shape()));
  require(x_t.dim(2) % 2 == 0 && x_t.dim(3) % 2 == 0, ErrorKind::kShapeMismatch,
          "denoiser needs even spatial extents");
  require(t.size() == x_t.dim(0), ErrorKind::kShapeMismatch,
          "one timestep per batch item required");
  const std::size_t batch = x_t.dim(0);

  auto emb = silu(time_mlp_(timestep_embedding(t, config_.time_dim)));
  auto bias1 = reshape(time_proj1_(emb), {batch, config_.base_width, 1, 1});
  auto bias2 = reshape(time_proj2_(emb), {batch, 2 * config_.base_width, 1, 1});

  auto input = concat({x_t, mask}, 1);
  auto h1 = silu(add(enc1a_(input), bias1));
  h1 = silu(enc1b_(h1));
  auto h2 = silu(add(enc2a_(avg_pool2x(h1)), bias2));
  h2 = silu(enc2b_(h2));
  auto up = concat({upsample2x(h2), h1}, 1);
  auto d = silu(dec1a_(up));
  d = silu(dec1b_(d));
  return out_(d);
}

// ---------------------------------------------------------------------------

Tensor noise_prediction_loss(const NoisePredictor& net, const Batch& batch,
                             const std::vector<std::size_t>& t, const Tensor& eps,
                             const NoiseSchedule& schedule) {
  auto x_t = q_sample(batch.images, t, schedule, eps);
  return mse_loss(net.predict_noise(x_t, t, batch.masks), eps);
}

namespace {

void validate_batch(const Batch& batch) {
  require(batch.images.rank() == 4 && batch.images.dim(1) == 1, ErrorKind::kShapeMismatch,
          "training images must be [B,1,H,W]");
  require(batch.masks.shape() == batch.images.shape(), ErrorKind::kShapeMismatch,
          "masks must match images");
  for (double v : batch.images.data()) {
    require(v >= 0.0 && v <= 1.0, ErrorKind::kInvalidArgument, "training images must lie in [0,1]");
  }
  for (double v : batch.masks.data()) {
    require(v == 0.0 || v == 1.0, ErrorKind::kInvalidArgument, "masks must be binary");
  }
}

}  // namespace

double train_step(DenoiserNet& net, const Batch& batch, const NoiseSchedule& schedule, Rng& rng,
                  Adam& optimizer) {
  validate_batch(batch);
  const std::size_t count = batch.images.dim(0);
  std::vector<std::size_t> t(count);
  for (auto& ti : t) ti = rng.index(schedule.steps());
  auto eps = Tensor::randn(batch.images.shape(), rng);
  Tensor loss;
  try {
    loss = noise_prediction_loss(net, batch, t, eps, schedule);
    backward(loss);
  } catch (const Error& e) {
    optimizer.zero_grad();
    if (e.kind() == ErrorKind::kNonFinite) {
      fail(ErrorKind::kNumeric, std::string("training step aborted: ") + e.what());
    }
    throw;
  }
  optimizer.step();
  return loss.item();
}

// ---------------------------------------------------------------------------

namespace {

struct StepOutput {
  Tensor next;
  Tensor eps_hat;
};

StepOutput reverse_step(const NoisePredictor& net, const Tensor& x_t, std::size_t t,
                        const Tensor& mask, const NoiseSchedule& schedule, Rng& rng) {
  check_timestep(t, schedule);
  NoGradGuard no_grad;
  auto eps_hat = net.predict_noise(as_batch(x_t), {t}, as_batch(mask));
  eps_hat = reshape(eps_hat, x_t.shape());
  const double beta = schedule.beta[t];
  const double coeff = beta / std::sqrt(1.0 - schedule.alpha_bar[t]);
  auto mu = scale(sub(x_t, scale(eps_hat, coeff)), 1.0 / std::sqrt(schedule.alpha[t]));
  if (t == 0) return {mu, eps_hat};
  auto z = Tensor::randn(x_t.shape(), rng);
  return {add(mu, scale(z, std::sqrt(beta))), eps_hat};
}

void validate_mask(const Tensor& mask) {
  require(mask.rank() == 2, ErrorKind::kShapeMismatch,
          "conditioning mask must be [H,W], got " + shape_string(mask.shape()));
  for (double v : mask.data()) {
    require(v == 0.0 || v == 1.0, ErrorKind::kInvalidArgument, "conditioning mask must be binary");
  }
}

}  // namespace

Tensor p_sample_step(const NoisePredictor& net, const Tensor& x_t, std::size_t t,
                     const Tensor& mask, const NoiseSchedule& schedule, Rng& rng) {
  require(mask.shape() == x_t.shape(), ErrorKind::kShapeMismatch, "mask must match x_t");
  return reverse_step(net, x_t, t, mask, schedule, rng).next;
}

bool records_frame(std::size_t t, std::size_t steps, std::size_t stride) {
  return t == 0 || (steps - 1 - t) % stride == 0;
}

SampleResult sample(const NoisePredictor& net, const Tensor& mask, const NoiseSchedule& schedule,
                    Rng& rng, SampleOptions options) {
  validate_mask(mask);
  require(options.stride >= 1, ErrorKind::kInvalidArgument, "frame stride must be >= 1");
  SampleResult result;
  auto x = Tensor::randn(mask.shape(), rng);
  for (std::size_t t = schedule.steps(); t-- > 0;) {
    StepOutput step;
    try {
      step = reverse_step(net, x, t, mask, schedule, rng);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNonFinite) {
        fail(ErrorKind::kNumeric,
             "sampling diverged at t=" + std::to_string(t) + ": " + e.what());
      }
      throw;
    }
    if (options.record && records_frame(t, schedule.steps(), options.stride)) {
      TrajectoryFrame frame;
      frame.t = t;
      frame.x_t = x;
      frame.eps_hat = step.eps_hat;
      double total = 0.0;
      for (double v : step.eps_hat.data()) total += std::abs(v);
      frame.eps_mag = total / static_cast<double>(step.eps_hat.numel());
      result.frames.push_back(std::move(frame));
    }
    x = step.next;
  }
  std::vector<double> clamped(x.data().begin(), x.data().end());
  for (auto& v : clamped) v = std::clamp(v, 0.0, 1.0);
  result.image = Tensor::from(x.shape(), std::move(clamped));
  return result;
}

std::vector<TrajectoryFrame> trajectory(const NoisePredictor& net, const Tensor& mask,
                                        const NoiseSchedule& schedule, Rng& rng,
                                        std::size_t stride) {
  require(stride >= 1, ErrorKind::kInvalidArgument, "frame stride must be >= 1");
  return sample(net, mask, schedule, rng, {.record = true, .stride = stride}).frames;
}

}  // namespace protodiff::diffusion
