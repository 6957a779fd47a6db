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

#include "protodiff/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "protodiff/error.hpp"
#include "protodiff/rng.hpp"

namespace protodiff::metrics {

void MetricConfig::validate() const {
  require(peak > 0.0, ErrorKind::kConfig, "peak intensity L must be positive");
  require(k1 > 0.0 && k2 > 0.0, ErrorKind::kConfig, "SSIM constants must be positive");
  require(ssim_window >= 1, ErrorKind::kConfig, "SSIM window must be >= 1");
  require(psnr_cap > 0.0, ErrorKind::kConfig, "PSNR cap must be positive");
  for (double w : lpips_weights) {
    require(w >= 0.0, ErrorKind::kConfig, "LPIPS layer weights must be non-negative");
  }
}

namespace {

// Accepts [H,W] or a single-item [1,1,H,W] batch.
Shape plane_shape(const Tensor& image) {
  const auto& s = image.shape();
  if (s.size() == 2) return s;
  if (s.size() == 4 && s[0] == 1 && s[1] == 1) return {s[2], s[3]};
  fail(ErrorKind::kShapeMismatch, "expected an [H,W] image, got " + shape_string(s));
}

void require_same_shape(const Tensor& x, const Tensor& y) {
  require(x.shape() == y.shape(), ErrorKind::kShapeMismatch,
          "image shapes differ: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
}

}  // namespace

double mse(const Tensor& x, const Tensor& x_hat) {
  require_same_shape(x, x_hat);
  require(x.numel() > 0, ErrorKind::kInvalidArgument, "mse of empty images");
  auto a = x.data();
  auto b = x_hat.data();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

double psnr(const Tensor& x, const Tensor& x_hat, const MetricConfig& config) {
  const double err = mse(x, x_hat);
  if (err == 0.0) return config.psnr_cap;
  return 10.0 * std::log10(config.peak * config.peak / err);
}

double ssim(const Tensor& x, const Tensor& x_hat, const MetricConfig& config) {
  require_same_shape(x, x_hat);
  const auto shape = plane_shape(x);
  const std::size_t h = shape[0], w = shape[1], k = config.ssim_window;
  require(h >= k && w >= k, ErrorKind::kInvalidArgument,
          "image " + shape_string(shape) + " smaller than the " + std::to_string(k) + "x" +
              std::to_string(k) + " SSIM window");
  auto a = x.data();
  auto b = x_hat.data();
  const double c1 = config.c1();
  const double c2 = config.c2();
  const double n = static_cast<double>(k * k);
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r = 0; r + k <= h; ++r) {
    for (std::size_t c = 0; c + k <= w; ++c) {
      double sa = 0, sb = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          sa += a[(r + i) * w + c + j];
          sb += b[(r + i) * w + c + j];
        }
      const double mu_a = sa / n, mu_b = sb / n;
      double vaa = 0, vbb = 0, vab = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double da = a[(r + i) * w + c + j] - mu_a;
          const double db = b[(r + i) * w + c + j] - mu_b;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      vaa /= n;
      vbb /= n;
      vab /= n;
      total += ((2 * mu_a * mu_b + c1) * (2 * vab + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (vaa + vbb + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

// ---------------------------------------------------------------------------

PerceptualNet::PerceptualNet(std::uint64_t seed) {
  Rng rng(seed);
  stage1_ = Conv2dLayer::create(1, 8, 3, rng);
  stage2_ = Conv2dLayer::create(8, 16, 3, rng);
  stage3_ = Conv2dLayer::create(16, 16, 3, rng);
  for (auto* layer : {&stage1_, &stage2_, &stage3_}) {
    layer->weight.set_requires_grad(false);
    layer->bias.set_requires_grad(false);
  }
}

namespace {

// Divides every spatial position's channel vector by its L2 norm.
Tensor unit_normalize_channels(const Tensor& t) {
  const std::size_t c = t.dim(1), plane = t.dim(2) * t.dim(3);
  std::vector<double> out(t.data().begin(), t.data().end());
  for (std::size_t b = 0; b < t.dim(0); ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      double norm2 = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = out[(b * c + ch) * plane + p];
        norm2 += v * v;
      }
      const double inv = 1.0 / (std::sqrt(norm2) + 1e-10);
      for (std::size_t ch = 0; ch < c; ++ch) out[(b * c + ch) * plane + p] *= inv;
    }
  }
  return Tensor::from(t.shape(), std::move(out));
}

}  // namespace

std::array<Tensor, 3> PerceptualNet::taps(const Tensor& image) const {
  const auto shape = plane_shape(image);
  require(shape[0] % 4 == 0 && shape[1] % 4 == 0 && shape[0] > 0 && shape[1] > 0,
          ErrorKind::kShapeMismatch, "perceptual net needs extents divisible by 4");
  NoGradGuard no_grad;
  auto x = reshape(image, {1, 1, shape[0], shape[1]});
  auto t1 = relu(stage1_(x));
  auto t2 = relu(stage2_(avg_pool2x(t1)));
  auto t3 = relu(stage3_(avg_pool2x(t2)));
  return {unit_normalize_channels(t1), unit_normalize_channels(t2), unit_normalize_channels(t3)};
}

double lpips(const Tensor& x, const Tensor& x_hat, const PerceptualNet& net,
             const MetricConfig& config) {
  require_same_shape(x, x_hat);
  const auto fa = net.taps(x);
  const auto fb = net.taps(x_hat);
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    auto a = fa[l].data();
    auto b = fb[l].data();
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    const double positions = static_cast<double>(fa[l].dim(2) * fa[l].dim(3));
    total += config.lpips_weights[l] * sq / positions;
  }
  return total;
}

// ---------------------------------------------------------------------------

double clamped_pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kShapeMismatch, "correlation of unequal lengths");
  if (a.size() < 2) return 0.0;
  const double n = static_cast<double>(a.size());
  double mean_a = 0, mean_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0, var_a = 0, var_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - mean_a) * (b[i] - mean_b);
    var_a += (a[i] - mean_a) * (a[i] - mean_a);
    var_b += (b[i] - mean_b) * (b[i] - mean_b);
  }
  if (var_a <= 0.0 || var_b <= 0.0) return 0.0;
  const double rho = cov / std::sqrt(var_a * var_b);
  return std::clamp(rho, 0.0, 1.0);
}

double spatial_corr(std::span<const double> prototype, const FeatureMap& map) {
  const auto match = best_match(map, prototype);
  return clamped_pearson(prototype, map.cell(match.h, match.w));
}

double faithfulness(std::span<const double> nis, std::span<const double> corrs) {
  require(nis.size() == corrs.size(), ErrorKind::kShapeMismatch,
          "NIS and correlation vectors differ in length");
  require(!nis.empty(), ErrorKind::kInvalidArgument, "faithfulness needs m >= 1");
  double total = 0.0;
  for (std::size_t j = 0; j < nis.size(); ++j) total += nis[j] * corrs[j];
  return total / static_cast<double>(nis.size());
}

double dice(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  std::size_t size_a = 0, size_b = 0, overlap = 0;
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    require((av[i] == 0.0 || av[i] == 1.0) && (bv[i] == 0.0 || bv[i] == 1.0),
            ErrorKind::kInvalidArgument, "dice requires binary masks");
    size_a += av[i] == 1.0;
    size_b += bv[i] == 1.0;
    overlap += av[i] == 1.0 && bv[i] == 1.0;
  }
  if (size_a + size_b == 0) return 1.0;
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(size_a + size_b);
}

Tensor threshold_mask(const Tensor& image, double threshold) {
  std::vector<double> out(image.data().begin(), image.data().end());
  for (auto& v : out) v = v >= threshold ? 1.0 : 0.0;
  return Tensor::from(image.shape(), std::move(out));
}

// ---------------------------------------------------------------------------

namespace {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Gaussian fit(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    require(rows[static_cast<std::size_t>(i)].size() == dim, ErrorKind::kShapeMismatch,
            "feature vectors differ in dimension");
    for (std::size_t d = 0; d < dim; ++d) {
      x(i, static_cast<Eigen::Index>(d)) = rows[static_cast<std::size_t>(i)][d];
    }
  }
  Gaussian g;
  g.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  return g;
}

// Eigenvalues of a symmetric matrix with tiny negatives clamped to zero.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m,
                                                         const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  require(solver.info() == Eigen::Success, ErrorKind::kNumeric,
          std::string("eigen-decomposition did not converge for ") + what);
  require(solver.eigenvalues().minCoeff() >= -1e-8, ErrorKind::kNumeric,
          std::string("negative eigenvalue in ") + what);
  return solver;
}

}  // namespace

double frechet_distance(const std::vector<std::vector<double>>& feats_a,
                        const std::vector<std::vector<double>>& feats_b) {
  require(feats_a.size() >= 2 && feats_b.size() >= 2, ErrorKind::kInvalidArgument,
          "frechet distance needs at least two samples per set");
  const std::size_t dim = feats_a.front().size();
  require(dim > 0, ErrorKind::kInvalidArgument, "empty feature vectors");
  const auto a = fit(feats_a, dim);
  const auto b = fit(feats_b, dim);

  const auto eig_a = psd_eigen(a.cov, "first covariance");
  const Eigen::VectorXd root_vals = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root_a =
      eig_a.eigenvectors() * root_vals.asDiagonal() * eig_a.eigenvectors().transpose();
  Eigen::MatrixXd inner = root_a * b.cov * root_a;
  inner = 0.5 * (inner + inner.transpose());
  const auto eig_inner = psd_eigen(inner, "covariance product");
  const double trace_sqrt = eig_inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
  return std::max(value, 0.0);
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace protodiff::metrics
