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

#include "protodiff/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "protodiff/error.hpp"
#include "protodiff/rng.hpp"

namespace protodiff::phantom {

namespace {

// Squared normalized radius of (x, y) in the ellipse's own frame; <= 1 inside.
double ellipse_radius2(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  const double u = (dx * c + dy * s) / e.a;
  const double v = (-dx * s + dy * c) / e.b;
  return u * u + v * v;
}

std::vector<Ellipse> draw_geometry(Rng& rng, std::size_t size, const PhantomParams& params) {
  const double n = static_cast<double>(size);
  const std::size_t span = params.max_ellipses - params.min_ellipses + 1;
  const std::size_t count = params.min_ellipses + rng.index(span);

  std::vector<Ellipse> out;
  Ellipse outer;
  outer.cx = n * rng.uniform(0.42, 0.58);
  outer.cy = n * rng.uniform(0.42, 0.58);
  outer.a = n * rng.uniform(0.26, 0.40);
  outer.b = n * rng.uniform(0.22, 0.34);
  outer.theta = rng.uniform(0.0, std::numbers::pi);
  outer.intensity = rng.uniform(0.45, 0.65);
  out.push_back(outer);

  // Inner ellipses are shrunken copies whose centre lies within the outer
  // ellipse's norm ball of radius (1 - s), so each stays inside the outer one.
  for (std::size_t k = 1; k < count; ++k) {
    const double s = rng.uniform(0.3, 0.6);
    const double reach = 0.8 * (1.0 - s) * rng.uniform();
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double u = reach * std::cos(phi) * outer.a;
    const double v = reach * std::sin(phi) * outer.b;
    Ellipse inner = outer;
    inner.cx = outer.cx + u * std::cos(outer.theta) - v * std::sin(outer.theta);
    inner.cy = outer.cy + u * std::sin(outer.theta) + v * std::cos(outer.theta);
    inner.a = s * outer.a;
    inner.b = s * outer.b;
    inner.intensity = rng.uniform(0.12, 0.22);
    out.push_back(inner);
  }
  return out;
}

}  // namespace

Phantom generate_phantom(std::uint64_t seed, std::size_t size, const PhantomParams& params) {
  require(size >= 16, ErrorKind::kInvalidArgument, "phantom size must be at least 16");
  require(params.min_ellipses >= 1 && params.min_ellipses <= params.max_ellipses,
          ErrorKind::kInvalidArgument, "invalid ellipse count range");
  require(params.texture_amplitude >= 0.0 && params.noise_floor >= 0.0,
          ErrorKind::kInvalidArgument, "texture amplitude and noise floor must be >= 0");
  require(params.background >= 0.0 && params.background <= 1.0, ErrorKind::kInvalidArgument,
          "background level must lie in [0,1]");

  Rng rng(seed);
  Phantom phantom;
  phantom.seed = seed;
  phantom.ellipses = params.ellipses.empty() ? draw_geometry(rng, size, params) : params.ellipses;
  for (const auto& e : phantom.ellipses) {
    require(e.a > 0.0 && e.b > 0.0, ErrorKind::kInvalidArgument,
            "degenerate ellipse: axes must be positive");
  }

  // Band-limited texture: a few low-frequency plane waves.
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves(3);
  for (auto& w : waves) {
    const double freq = rng.uniform(1.0, 3.0) * 2.0 * std::numbers::pi / static_cast<double>(size);
    const double dir = rng.uniform(0.0, std::numbers::pi);
    w = {freq * std::cos(dir), freq * std::sin(dir), rng.uniform(0.0, 2.0 * std::numbers::pi),
         params.texture_amplitude / 3.0};
  }

  std::vector<double> image(size * size, params.background);
  std::vector<double> mask(size * size, 0.0);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double x = static_cast<double>(c) + 0.5;
      const double y = static_cast<double>(r) + 0.5;
      double value = 0.0;
      bool inside_any = false;
      for (const auto& e : phantom.ellipses) {
        const double r2 = ellipse_radius2(e, x, y);
        if (r2 <= 1.0) {
          inside_any = true;
          value += e.intensity * (1.0 - 0.25 * r2);
        }
      }
      if (inside_any) {
        if (params.texture_amplitude > 0.0) {
          for (const auto& w : waves) value += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
        }
        image[r * size + c] = params.background + value;
        mask[r * size + c] = 1.0;
      }
    }
  }
  if (params.noise_floor > 0.0) {
    for (auto& v : image) v += params.noise_floor * rng.normal();
  }
  for (auto& v : image) v = std::clamp(v, 0.0, 1.0);

  phantom.image = Tensor::from({size, size}, std::move(image));
  phantom.mask = Tensor::from({size, size}, std::move(mask));
  return phantom;
}

Phantom downsample2x(const Phantom& phantom) {
  const std::size_t h = phantom.image.dim(0), w = phantom.image.dim(1);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::kShapeMismatch, "downsample needs even extents");
  const std::size_t oh = h / 2, ow = w / 2;
  auto img = phantom.image.data();
  auto msk = phantom.mask.data();
  std::vector<double> image(oh * ow), mask(oh * ow);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double iv = 0.0, mv = 0.0;
      for (std::size_t dr = 0; dr < 2; ++dr) {
        for (std::size_t dc = 0; dc < 2; ++dc) {
          iv += img[(2 * r + dr) * w + 2 * c + dc];
          mv += msk[(2 * r + dr) * w + 2 * c + dc];
        }
      }
      image[r * ow + c] = iv / 4.0;
      mask[r * ow + c] = mv >= 2.0 ? 1.0 : 0.0;
    }
  }
  Phantom out;
  out.seed = phantom.seed;
  out.ellipses = phantom.ellipses;
  for (auto& e : out.ellipses) {
    e.cx /= 2.0;
    e.cy /= 2.0;
    e.a /= 2.0;
    e.b /= 2.0;
  }
  out.image = Tensor::from({oh, ow}, std::move(image));
  out.mask = Tensor::from({oh, ow}, std::move(mask));
  return out;
}

Tensor quantize(const Tensor& image) {
  std::vector<double> values(image.data().begin(), image.data().end());
  for (auto& v : values) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return Tensor::from(image.shape(), std::move(values));
}

}  // namespace protodiff::phantom
