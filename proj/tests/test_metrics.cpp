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


#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "protodiff/error.hpp"
#include "protodiff/metrics.hpp"

using namespace protodiff;
using namespace protodiff::metrics;

namespace {

Tensor random_image(std::size_t h, std::size_t w, Rng& rng) {
  return Tensor::from({h, w}, oracle::random_values(h * w, rng, 0.0, 1.0));
}

FeatureMap random_map(std::size_t h, std::size_t w, std::size_t d, Rng& rng) {
  return {h, w, d, oracle::random_values(h * w * d, rng)};
}

}  // namespace

TEST_CASE("mse and psnr examples") {
  auto zero = Tensor::zeros({4, 4});
  auto offset = Tensor::full({4, 4}, 0.1);
  CHECK(mse(zero, zero) == 0.0);
  CHECK(mse(zero, offset) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(psnr(zero, zero) == 100.0);

  // An image pair with MSE exactly 0.01.
  auto a = Tensor::zeros({1, 4});
  auto b = Tensor::from({1, 4}, {0.2, 0.0, 0.0, 0.0});
  CHECK(std::abs(psnr(a, b) - 20.0) <= 1e-9);

  Rng rng(1);
  auto x = random_image(6, 5, rng);
  auto y = random_image(6, 5, rng);
  double loop = 0.0;
  for (std::size_t i = 0; i < 30; ++i) loop += std::pow(x.data()[i] - y.data()[i], 2);
  CHECK(std::abs(mse(x, y) - loop / 30.0) < 1e-15);
  CHECK_THROWS_AS(mse(x, Tensor::zeros({5, 6})), Error);
}

TEST_CASE("psnr decreases as mse grows") {
  auto base = Tensor::zeros({2, 2});
  double previous = 1e300;
  for (double level = 0.01; level < 1.0; level += 0.05) {
    const double p = psnr(base, Tensor::full({2, 2}, level));
    CHECK(p < previous);
    previous = p;
  }
}

TEST_CASE("ssim identities and the constant-image case") {
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    auto x = random_image(12, 10, rng);
    auto y = random_image(12, 10, rng);
    CHECK(std::abs(ssim(x, x) - 1.0) <= 1e-9);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-14));
    CHECK(ssim(x, y) < 1.0);
  }
  MetricConfig cfg;
  const double expected = cfg.c1() * cfg.c2() / ((1.0 + cfg.c1()) * cfg.c2());
  const double value = ssim(Tensor::zeros({8, 8}), Tensor::full({8, 8}, 1.0));
  CHECK(std::abs(value - expected) <= 1e-8);
  CHECK(std::abs(value - 9.999e-5) <= 1e-8);
  CHECK_THROWS_AS(ssim(Tensor::zeros({6, 6}), Tensor::zeros({6, 6})), Error);
}

TEST_CASE("ssim matches a direct single-window evaluation") {
  Rng rng(3);
  auto x = random_image(7, 7, rng);
  auto y = random_image(7, 7, rng);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 49; ++i) {
    mx += x.data()[i] / 49.0;
    my += y.data()[i] / 49.0;
  }
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < 49; ++i) {
    vx += std::pow(x.data()[i] - mx, 2) / 49.0;
    vy += std::pow(y.data()[i] - my, 2) / 49.0;
    cxy += (x.data()[i] - mx) * (y.data()[i] - my) / 49.0;
  }
  const double c1 = 1e-4, c2 = 9e-4;
  const double expected =
      (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  CHECK(std::abs(ssim(x, y) - expected) < 1e-12);
}

TEST_CASE("lpips identities") {
  PerceptualNet net;
  Rng rng(4);
  auto x = random_image(16, 16, rng);
  auto y = random_image(16, 16, rng);
  CHECK(lpips(x, x, net) == 0.0);
  CHECK(lpips(x, y, net) > 0.0);
  CHECK(lpips(x, y, net) == doctest::Approx(lpips(y, x, net)).epsilon(1e-14));
  PerceptualNet again;
  CHECK(lpips(x, y, again) == lpips(x, y, net));
  auto taps = net.taps(x);
  CHECK(taps[0].shape() == Shape{1, 8, 16, 16});
  CHECK(taps[2].shape() == Shape{1, 16, 4, 4});
  CHECK_THROWS_AS(net.taps(Tensor::zeros({10, 10})), Error);
}

TEST_CASE("spatial correlation") {
  FeatureMap map{2, 2, 3, {0, 0, 0, 1, 2, 4, 5, 5, 5, 9, 9, 9}};
  std::vector<double> p{1, 2, 4};
  CHECK(spatial_corr(p, map) == doctest::Approx(1.0).epsilon(1e-14));
  std::vector<double> q{-1, -2, -4};
  FeatureMap anti{1, 1, 3, {1, 2, 4}};
  CHECK(spatial_corr(q, anti) == 0.0);
  std::vector<double> flat{3, 3, 3};
  CHECK(spatial_corr(flat, anti) == 0.0);

  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    auto a = oracle::random_values(16, rng);
    auto b = oracle::random_values(16, rng);
    CHECK(std::abs(clamped_pearson(a, b) - std::max(0.0, oracle::pearson(a, b))) < 1e-12);
  }
}

TEST_CASE("faithfulness examples and bound") {
  std::vector<double> one{1.0};
  CHECK(faithfulness(one, one) == 1.0);
  std::vector<double> nis{0.5, 0.5}, corr{1.0, 0.0};
  CHECK(faithfulness(nis, corr) == 0.25);
  CHECK_THROWS_AS(faithfulness(nis, one), Error);

  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const std::size_t m = 1 + rng.index(10);
    auto g = oracle::random_values(m, rng, -5, 0);
    std::vector<double> w(m), c(m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += (w[j] = std::exp(g[j]));
    for (std::size_t j = 0; j < m; ++j) {
      w[j] /= total;
      c[j] = rng.uniform();
    }
    const double f = faithfulness(w, c);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0 / static_cast<double>(m) + 1e-15);
  }
}

TEST_CASE("dice examples") {
  auto a = Tensor::from({1, 4}, {1, 1, 0, 0});
  auto b = Tensor::from({1, 4}, {0, 1, 1, 0});
  auto c = Tensor::from({1, 4}, {0, 0, 1, 1});
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, c) == 0.0);
  CHECK(dice(a, b) == 0.5);
  CHECK(dice(b, a) == 0.5);
  CHECK(dice(Tensor::zeros({2, 2}), Tensor::zeros({2, 2})) == 1.0);
  CHECK_THROWS_AS(dice(a, Tensor::full({1, 4}, 0.5)), Error);

  auto img = Tensor::from({1, 3}, {0.1, 0.2, 0.9});
  auto m = threshold_mask(img, 0.2);
  CHECK(m.data()[0] == 0.0);
  CHECK(m.data()[1] == 1.0);
  CHECK(m.data()[2] == 1.0);
}

TEST_CASE("frechet distance") {
  Rng rng(7);
  std::vector<std::vector<double>> a;
  for (int i = 0; i < 40; ++i) a.push_back(oracle::random_values(5, rng));
  CHECK(std::abs(frechet_distance(a, a)) <= 1e-6);

  std::vector<std::vector<double>> s0{{-1}, {1}}, s1{{0}, {2}};
  CHECK(frechet_distance(s0, s1) == doctest::Approx(1.0).epsilon(1e-12));

  // Independent axes with distinct scales: sample covariances are diagonal
  // when the samples are built from a symmetric +/- design.
  const std::vector<double> sa{0.5, 2.0, 1.0}, sb{1.5, 0.25, 1.0};
  const std::vector<double> ma{0.0, 1.0, -1.0}, mb{0.5, 0.0, 2.0};
  std::vector<std::vector<double>> da, db;
  for (int sign_mask = 0; sign_mask < 8; ++sign_mask) {
    std::vector<double> ra(3), rb(3);
    for (int d = 0; d < 3; ++d) {
      const double s = (sign_mask >> d) & 1 ? 1.0 : -1.0;
      ra[d] = ma[d] + s * sa[d];
      rb[d] = mb[d] + s * sb[d];
    }
    da.push_back(ra);
    db.push_back(rb);
  }
  double expected = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double va = sa[d] * sa[d] * 8.0 / 7.0, vb = sb[d] * sb[d] * 8.0 / 7.0;
    expected += std::pow(std::sqrt(va) - std::sqrt(vb), 2) + std::pow(ma[d] - mb[d], 2);
  }
  CHECK(frechet_distance(da, db) == doctest::Approx(expected).epsilon(1e-10));

  std::vector<std::vector<double>> b;
  for (int i = 0; i < 30; ++i) b.push_back(oracle::random_values(5, rng, 0.0, 2.0));
  CHECK(frechet_distance(a, b) > 0.0);
  CHECK_THROWS_AS(frechet_distance({{1.0}}, s1), Error);
}

TEST_CASE("summary statistics") {
  std::vector<double> v{1, 2, 3, 4};
  auto s = summarize(v);
  CHECK(s.count == 4);
  CHECK(s.mean == 2.5);
  CHECK(s.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(summarize(std::vector<double>{7}).stddev == 0.0);
}

TEST_CASE("metric config validation") {
  MetricConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.peak = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.lpips_weights[1] = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
