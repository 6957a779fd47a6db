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


// Acceptance run: prints one PASS/FAIL line per criterion AC1..AC10 and exits
// non-zero when any criterion fails. AC9 and AC10 drive the protodiff CLI on
// the smoke configuration.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oracles.hpp"
#include "protodiff/checkpoint.hpp"
#include "protodiff/diffusion.hpp"
#include "protodiff/error.hpp"
#include "protodiff/harness.hpp"
#include "protodiff/metrics.hpp"
#include "protodiff/optim.hpp"
#include "protodiff/phantom.hpp"
#include "protodiff/prototypes.hpp"

using namespace protodiff;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates sub-checks; the first few failures are kept for the report.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok) {
      ++failed_;
      if (failures_.size() < 4) failures_.push_back(what);
    }
  }
  Outcome outcome(const std::string& summary) const {
    Outcome out{failed_ == 0, summary};
    if (failed_ > 0) {
      out.detail += "; " + std::to_string(failed_) + "/" + std::to_string(total_) + " checks failed:";
      for (const auto& f : failures_) out.detail += " [" + f + "]";
    }
    return out;
  }

 private:
  std::size_t total_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::string> failures_;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor::from(std::move(shape), oracle::random_values(n, rng, lo, hi));
}

// Values bounded away from zero so relu and log stay off their kinks.
Tensor away_from_zero(Shape shape, Rng& rng) {
  auto t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::vector<double> v(t.data().begin(), t.data().end());
  for (auto& x : v) x = rng.uniform() < 0.5 ? -x : x;
  return Tensor::from(t.shape(), std::move(v));
}

// ---------------------------------------------------------------------------

Outcome ac1_autodiff() {
  const auto start = Clock::now();
  Rng rng(101);
  Checks checks;
  double worst_op = 0.0, worst_deep = 0.0;

  struct OpCase {
    std::string name;
    std::function<Tensor(const Tensor&)> fn;
    Tensor point;
  };
  // Each op is contracted with a random weight tensor so the upstream
  // gradient is not uniform.
  auto contract = [&rng](std::function<Tensor(const Tensor&)> op, Shape out_shape) {
    auto w = random_tensor(std::move(out_shape), rng);
    return [op, w](const Tensor& x) { return sum(mul(op(x), w)); };
  };
  const auto c23 = random_tensor({2, 3}, rng);
  const auto pos23 = random_tensor({2, 3}, rng, 0.5, 1.5);
  const auto row13 = random_tensor({1, 3}, rng);
  const auto b34 = random_tensor({3, 4}, rng);
  const auto a23 = random_tensor({2, 3}, rng);
  const auto img = random_tensor({2, 3, 4, 4}, rng);
  const auto ker = random_tensor({2, 3, 3, 3}, rng);
  const auto other = random_tensor({2, 1, 4, 4}, rng);
  std::vector<OpCase> ops = {
      {"add", contract([&](const Tensor& x) { return add(x, c23); }, {2, 3}),
       random_tensor({2, 3}, rng)},
      {"add(broadcast)", contract([&](const Tensor& x) { return add(c23, x); }, {2, 3}),
       random_tensor({1, 3}, rng)},
      {"sub", contract([&](const Tensor& x) { return sub(c23, x); }, {2, 3}),
       random_tensor({2, 3}, rng)},
      {"mul", contract([&](const Tensor& x) { return mul(x, row13); }, {2, 3}),
       random_tensor({2, 3}, rng)},
      {"div(numerator)", contract([&](const Tensor& x) { return div(x, pos23); }, {2, 3}),
       random_tensor({2, 3}, rng)},
      {"div(denominator)", contract([&](const Tensor& x) { return div(c23, x); }, {2, 3}),
       random_tensor({2, 3}, rng, 0.5, 1.5)},
      {"neg", contract([](const Tensor& x) { return neg(x); }, {2, 3}), random_tensor({2, 3}, rng)},
      {"exp", contract([](const Tensor& x) { return exp(x); }, {2, 3}), random_tensor({2, 3}, rng)},
      {"log", contract([](const Tensor& x) { return log(x); }, {2, 3}),
       random_tensor({2, 3}, rng, 0.5, 2.0)},
      {"relu", contract([](const Tensor& x) { return relu(x); }, {2, 3}), away_from_zero({2, 3}, rng)},
      {"silu", contract([](const Tensor& x) { return silu(x); }, {2, 3}), random_tensor({2, 3}, rng)},
      {"square", contract([](const Tensor& x) { return square(x); }, {2, 3}),
       random_tensor({2, 3}, rng)},
      {"scale", contract([](const Tensor& x) { return scale(x, -1.7); }, {2, 3}),
       random_tensor({2, 3}, rng)},
      {"add_scalar", contract([](const Tensor& x) { return add_scalar(x, 0.3); }, {2, 3}),
       random_tensor({2, 3}, rng)},
      {"matmul(left)", contract([&](const Tensor& x) { return matmul(x, b34); }, {2, 4}),
       random_tensor({2, 3}, rng)},
      {"matmul(right)", contract([&](const Tensor& x) { return matmul(a23, x); }, {2, 4}),
       random_tensor({3, 4}, rng)},
      {"conv2d(input)", contract([&](const Tensor& x) { return conv2d(x, ker, 1, 1); }, {2, 2, 4, 4}),
       random_tensor({2, 3, 4, 4}, rng)},
      {"conv2d(kernel)", contract([&](const Tensor& k) { return conv2d(img, k, 1, 1); }, {2, 2, 4, 4}),
       random_tensor({2, 3, 3, 3}, rng)},
      {"conv2d(stride 2)", contract([&](const Tensor& k) { return conv2d(img, k, 2, 0); }, {2, 2, 1, 1}),
       random_tensor({2, 3, 3, 3}, rng)},
      {"avg_pool2x", contract([](const Tensor& x) { return avg_pool2x(x); }, {2, 3, 2, 2}),
       random_tensor({2, 3, 4, 4}, rng)},
      {"upsample2x", contract([](const Tensor& x) { return upsample2x(x); }, {1, 2, 4, 4}),
       random_tensor({1, 2, 2, 2}, rng)},
      {"sum(axis)", contract([](const Tensor& x) { return sum(x, {1}); }, {2, 4}),
       random_tensor({2, 3, 4}, rng)},
      {"mean(axis)", contract([](const Tensor& x) { return mean(x, {0, 2}, true); }, {1, 3, 1}),
       random_tensor({2, 3, 4}, rng)},
      {"max(axis)", contract([](const Tensor& x) { return max(x, 1).values; }, {2, 4}),
       random_tensor({2, 3, 4}, rng)},
      {"max(all)", [](const Tensor& x) { return scale(max(x).values, 2.0); },
       random_tensor({3, 3}, rng)},
      {"softmax", contract([](const Tensor& x) { return softmax(x, 1); }, {2, 5}),
       random_tensor({2, 5}, rng)},
      {"reshape", contract([](const Tensor& x) { return reshape(x, {3, 2}); }, {3, 2}),
       random_tensor({2, 3}, rng)},
      {"concat", contract([&](const Tensor& x) { return concat({x, other}, 1); }, {2, 3, 4, 4}),
       random_tensor({2, 2, 4, 4}, rng)},
      {"take", contract([](const Tensor& x) { return take(x, {4, 0, 4, 2}); }, {4}),
       random_tensor({2, 3}, rng)},
      {"nchw_to_rows", contract([](const Tensor& x) { return nchw_to_rows(x); }, {8, 3}),
       random_tensor({2, 3, 2, 2}, rng)},
      {"mse_loss", [&](const Tensor& x) { return mse_loss(x, c23); }, random_tensor({2, 3}, rng)},
  };
  for (const auto& op : ops) {
    const auto report = grad_check(op.fn, op.point);
    worst_op = std::max(worst_op, report.max_relative_error);
    checks.expect(report.max_relative_error < 1e-4,
                  op.name + " rel err " + fmt(report.max_relative_error));
  }

  // Prototype objectives (shallow composites).
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 4; ++i) maps.push_back({3, 3, 4, oracle::random_values(36, rng)});
  const auto rows = prototypes::feature_rows(maps);
  for (int trial = 0; trial < 3; ++trial) {
    prototypes::PrototypeBank bank;
    bank.prototypes = random_tensor({3, 4}, rng);
    bank.provenance.assign(3, std::nullopt);
    const auto assigned = prototypes::assign_samples(bank, maps);
    const std::vector<std::pair<std::string, std::function<Tensor(const Tensor&)>>> objectives = {
        {"ppnet objective",
         [&](const Tensor& p) { return prototypes::ppnet_objective(p, rows, 9, assigned); }},
        {"eppnet objective",
         [&](const Tensor& p) { return prototypes::eppnet_objective(p, rows, 9, assigned, 0.1); }},
        {"protopool objective",
         [&](const Tensor& p) { return prototypes::protopool_objective(p, rows); }},
        {"diversity objective", [](const Tensor& p) { return prototypes::diversity_objective(p); }},
    };
    for (const auto& [name, fn] : objectives) {
      const auto report = grad_check(fn, bank.prototypes);
      worst_op = std::max(worst_op, report.max_relative_error);
      checks.expect(report.max_relative_error < 1e-4, name + " rel err " + fmt(report.max_relative_error));
    }
  }

  // Deep composites: the denoising loss and the extractor reconstruction loss
  // with respect to every network parameter.
  {
    diffusion::DenoiserConfig cfg;
    cfg.image_size = 8;
    cfg.base_width = 3;
    cfg.time_dim = 4;
    cfg.output_gain = 1.0;
    diffusion::DenoiserNet net(cfg, rng);
    diffusion::Batch batch{random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0),
                           Tensor::from({2, 1, 8, 8}, std::vector<double>(128, 1.0))};
    const auto schedule = diffusion::make_schedule(20, 0.01, 0.3);
    const std::vector<std::size_t> t{3, 17};
    const auto eps = Tensor::randn({2, 1, 8, 8}, rng);
    auto loss = [&] { return diffusion::noise_prediction_loss(net, batch, t, eps, schedule); };
    for (const auto& [name, param] : net.parameters().entries()) {
      const auto report = grad_check_param(loss, param);
      worst_deep = std::max(worst_deep, report.max_relative_error);
      checks.expect(report.max_relative_error < 1e-3,
                    "denoiser " + name + " rel err " + fmt(report.max_relative_error));
    }
  }
  {
    prototypes::ExtractorConfig cfg;
    cfg.depth = 4;
    prototypes::FeatureExtractor extractor(cfg, rng);
    const auto images = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
    auto loss = [&] { return mse_loss(extractor.reconstruct(images), images); };
    for (const auto& [name, param] : extractor.parameters().entries()) {
      const auto report = grad_check_param(loss, param);
      worst_deep = std::max(worst_deep, report.max_relative_error);
      checks.expect(report.max_relative_error < 1e-3,
                    "extractor " + name + " rel err " + fmt(report.max_relative_error));
    }
  }
  const double elapsed = seconds_since(start);
  checks.expect(elapsed < 60.0, "suite took " + fmt(elapsed) + " s");
  return checks.outcome(std::to_string(ops.size()) + " op kernels + 4 head objectives + 2 networks; max rel err " +
                        fmt(worst_op) + " (ops/heads), " + fmt(worst_deep) + " (deep); " +
                        fmt(elapsed, "%.1f") + " s");
}

// ---------------------------------------------------------------------------

Outcome ac2_forward_process() {
  const auto schedule = diffusion::make_schedule(1000, 1e-4, 0.02);
  const std::size_t n = 10000;
  const double c = 0.7;
  const auto x0 = Tensor::full({n}, c);
  Rng rng(202);
  Checks checks;
  double worst = 0.0;
  auto moments = [](const Tensor& x) {
    const auto v = x.data();
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double e : v) s += (e - m) * (e - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  for (std::size_t t : {0, 10, 100, 500, 999}) {
    const double ab = schedule.alpha_bar[t];
    const double mean_true = std::sqrt(ab) * c;
    const double var_true = 1.0 - ab;
    const double se_mean = std::sqrt(var_true / static_cast<double>(n));
    const double se_var = var_true * std::sqrt(2.0 / static_cast<double>(n - 1));
    auto judge = [&](const std::string& which, const Tensor& x) {
      const auto [m, v] = moments(x);
      const double zm = std::abs(m - mean_true) / se_mean;
      const double zv = std::abs(v - var_true) / se_var;
      worst = std::max({worst, zm, zv});
      checks.expect(zm <= 3.0, which + " mean at t=" + std::to_string(t) + " off by " + fmt(zm) + " SE");
      checks.expect(zv <= 3.0, which + " var at t=" + std::to_string(t) + " off by " + fmt(zv) + " SE");
    };
    judge("q_sample", diffusion::q_sample(x0, t, schedule, Tensor::randn({n}, rng)));
    Tensor x = x0;
    for (std::size_t k = 0; k <= t; ++k) x = diffusion::q_step(x, k, schedule, rng);
    judge("iterated q_step", x);
  }
  return checks.outcome("10^4 draws at t in {0,10,100,500,999}; worst deviation " + fmt(worst, "%.2f") +
                        " standard errors");
}

// ---------------------------------------------------------------------------

struct Overfit {
  phantom::Phantom target;
  diffusion::NoiseSchedule schedule;
  std::unique_ptr<diffusion::DenoiserNet> net;
  double train_seconds = 0.0;
};

// Desk U-Net-lite trained on a single 8x8 phantom (a 16x16 phantom
// downsampled 2x), T = 50 with the scaled desk beta range.
Overfit train_overfit(std::size_t steps) {
  Overfit out;
  out.target = phantom::downsample2x(phantom::generate_phantom(11, 16));
  out.schedule = diffusion::make_schedule(50, 0.002, 0.4);
  Rng init(5);
  diffusion::DenoiserConfig cfg;
  cfg.image_size = 8;
  out.net = std::make_unique<diffusion::DenoiserNet>(cfg, init);
  Adam opt(out.net->parameters().tensors(), {.learning_rate = 1e-3});
  const std::size_t batch = 8;
  std::vector<double> images, masks;
  for (std::size_t b = 0; b < batch; ++b) {
    images.insert(images.end(), out.target.image.data().begin(), out.target.image.data().end());
    masks.insert(masks.end(), out.target.mask.data().begin(), out.target.mask.data().end());
  }
  diffusion::Batch data{Tensor::from({batch, 1, 8, 8}, images), Tensor::from({batch, 1, 8, 8}, masks)};
  Rng rng(5);
  const auto start = Clock::now();
  for (std::size_t k = 0; k < steps; ++k) diffusion::train_step(*out.net, data, out.schedule, rng, opt);
  out.train_seconds = seconds_since(start);
  return out;
}

constexpr std::size_t kOverfitSteps = 1000;

Outcome ac3_overfit(const Overfit& model) {
  const auto start = Clock::now();
  Rng rng(0);
  const auto result = diffusion::sample(*model.net, model.target.mask, model.schedule, rng);
  const double score = metrics::ssim(model.target.image, result.image);
  const double total = model.train_seconds + seconds_since(start);
  Checks checks;
  checks.expect(score >= 0.8, "SSIM " + fmt(score));
  checks.expect(total < 300.0, "runtime " + fmt(total) + " s");
  return checks.outcome(std::to_string(kOverfitSteps) + " steps, SSIM " + fmt(score) + " vs training image, " +
                        fmt(total, "%.1f") + " s");
}

Outcome ac4_trajectory(const Overfit& model) {
  const std::size_t seeds = 8;
  const std::size_t last = model.schedule.steps() - 1;
  double at_end = 0.0, at_zero = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    const auto frames = diffusion::trajectory(*model.net, model.target.mask, model.schedule, rng, last);
    at_end += frames.front().eps_mag / static_cast<double>(seeds);
    at_zero += frames.back().eps_mag / static_cast<double>(seeds);
  }
  Checks checks;
  checks.expect(at_zero < at_end, "eps_mag(t=0) " + fmt(at_zero) + " is not below eps_mag(t=T-1) " + fmt(at_end));
  return checks.outcome("mean eps_mag over " + std::to_string(seeds) + " seeds: t=" + std::to_string(last) +
                        " -> " + fmt(at_end) + ", t=0 -> " + fmt(at_zero));
}

// ---------------------------------------------------------------------------

Outcome ac5_metrics() {
  Rng rng(505);
  Checks checks;
  const auto x = random_tensor({12, 12}, rng, 0.0, 1.0);
  const auto y = random_tensor({12, 12}, rng, 0.0, 1.0);
  const double s = metrics::ssim(x, x);
  checks.expect(std::abs(s - 1.0) <= 1e-9, "ssim(x,x) = " + fmt(s, "%.17g"));
  const metrics::PerceptualNet net;
  const double l = metrics::lpips(x, x, net);
  checks.expect(l == 0.0, "lpips(x,x) = " + fmt(l, "%.17g"));
  checks.expect(metrics::lpips(x, y, net) > 0.0, "lpips(x,y) not positive");
  const auto zero = Tensor::zeros({1, 4});
  const auto mse01 = Tensor::from({1, 4}, {0.2, 0.0, 0.0, 0.0});
  const double p = metrics::psnr(zero, mse01);
  checks.expect(std::abs(p - 20.0) <= 1e-9, "psnr(MSE=0.01) = " + fmt(p, "%.17g"));
  const auto a = Tensor::from({1, 4}, {1, 1, 0, 0});
  const auto b = Tensor::from({1, 4}, {0, 1, 1, 0});
  const auto c = Tensor::from({1, 4}, {0, 0, 1, 1});
  checks.expect(metrics::dice(a, a) == 1.0, "dice(a,a) != 1");
  checks.expect(metrics::dice(a, c) == 0.0, "dice(disjoint) != 0");
  checks.expect(metrics::dice(a, b) == 0.5, "dice(half overlap) != 0.5");
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 50; ++i) feats.push_back(oracle::random_values(6, rng));
  const double fd = metrics::frechet_distance(feats, feats);
  checks.expect(fd <= 1e-6, "frechet(A,A) = " + fmt(fd));
  const double constant = metrics::ssim(Tensor::zeros({8, 8}), Tensor::full({8, 8}, 1.0));
  checks.expect(std::abs(constant - 9.999e-5) <= 1e-8, "ssim(0,1) = " + fmt(constant, "%.10g"));
  return checks.outcome("ssim(x,x)-1=" + fmt(s - 1.0) + ", lpips(x,x)=" + fmt(l) + ", psnr=" +
                        fmt(p, "%.12g") + ", frechet(A,A)=" + fmt(fd) + ", ssim(0,1)=" +
                        fmt(constant, "%.10g"));
}

// ---------------------------------------------------------------------------

prototypes::PrototypeBank bank_from(const Tensor& p, prototypes::HeadKind head) {
  prototypes::PrototypeBank bank;
  bank.head = head;
  bank.prototypes = p;
  bank.provenance.assign(p.dim(0), std::nullopt);
  return bank;
}

Outcome ac6_prototype_oracles() {
  Rng rng(606);
  Checks checks;
  double worst = 0.0;
  const std::size_t trials = 50;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t h = 1 + rng.index(8), w = 1 + rng.index(8), d = 1 + rng.index(16);
    const std::size_t m = 1 + rng.index(10), n = 1 + rng.index(4);
    std::vector<FeatureMap> maps;
    for (std::size_t i = 0; i < n; ++i) maps.push_back({h, w, d, oracle::random_values(h * w * d, rng)});
    const auto bank = bank_from(random_tensor({m, d}, rng), prototypes::HeadKind::kPPNet);
    auto dist = [&](const FeatureMap& map, std::size_t cell, std::size_t j) {
      return oracle::squared_distance(map.values.data() + cell * d, bank.prototype(j).data(), d);
    };

    for (std::size_t j = 0; j < m; ++j) {
      const auto sim = prototypes::similarity_map(maps[0], bank.prototype(j));
      double best = -std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t cell = 0; cell < h * w; ++cell) {
        const double expected = -dist(maps[0], cell, j);
        worst = std::max(worst, std::abs(sim[cell] - expected));
        if (expected > best) {
          best = expected;
          arg = cell;
        }
      }
      const auto got = prototypes::max_similarity(maps[0], bank.prototype(j));
      worst = std::max(worst, std::abs(got.similarity - best));
      checks.expect(got.h * w + got.w == arg, "max_similarity argmax");
    }

    std::vector<std::vector<std::size_t>> assigned(m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t x = 0; x < n; ++x) {
        if (x == j % n || rng.uniform() < 0.5) assigned[j].push_back(x);
      }
    }
    double align = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t x : assigned[j])
        for (std::size_t cell = 0; cell < h * w; ++cell) best = std::min(best, dist(maps[x], cell, j));
      align += best;
    }
    worst = std::max(worst, std::abs(prototypes::alignment_loss(bank, maps, assigned) - align));

    double diversity = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j)
          diversity += std::exp(-oracle::squared_distance(bank.prototype(i).data(),
                                                          bank.prototype(j).data(), d));
    worst = std::max(worst, std::abs(prototypes::diversity_loss(bank) - diversity));

    const auto pool = prototypes::pool_assign(maps[0], bank_from(bank.prototypes, prototypes::HeadKind::kProtoPool));
    for (std::size_t cell = 0; cell < h * w; ++cell) {
      std::vector<double> weight(m);
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) top = std::max(top, weight[j] = -dist(maps[0], cell, j));
      double total = 0.0;
      for (auto& v : weight) total += (v = std::exp(v - top));
      for (std::size_t j = 0; j < m; ++j) {
        worst = std::max(worst, std::abs(pool.alpha[cell * m + j] - weight[j] / total));
      }
      for (std::size_t k = 0; k < d; ++k) {
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) z += weight[j] / total * bank.prototype(j)[k];
        worst = std::max(worst, std::abs(pool.pooled.values[cell * d + k] - z));
      }
    }
  }
  checks.expect(worst <= 1e-10, "max deviation " + fmt(worst));
  return checks.outcome(std::to_string(trials) + " random instances (grid <= 8x8, D <= 16, m <= 10); max deviation " +
                        fmt(worst));
}

Outcome ac7_nis() {
  Rng rng(707);
  Checks checks;
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.index(12);
    const auto g = oracle::random_values(m, rng, -30.0, 0.0);
    const auto w = prototypes::nis(g);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    auto shifted = g;
    const double c = rng.uniform(-100.0, 100.0);
    for (auto& v : shifted) v += c;
    worst_shift = std::max(worst_shift, oracle::max_abs_diff(w, prototypes::nis(shifted)));
    checks.expect(std::max_element(w.begin(), w.end()) - w.begin() ==
                      std::max_element(g.begin(), g.end()) - g.begin(),
                  "argmax differs");
  }
  checks.expect(worst_sum <= 1e-9, "sum deviates by " + fmt(worst_sum));
  checks.expect(worst_shift <= 1e-9, "shift changes NIS by " + fmt(worst_shift));
  return checks.outcome("100 vectors; max |sum-1| " + fmt(worst_sum) + ", max shift change " + fmt(worst_shift));
}

// ---------------------------------------------------------------------------

void check_push(const prototypes::PrototypeBank& before, const prototypes::PrototypeBank& after,
                const std::vector<FeatureMap>& maps, const std::vector<std::string>& ids, Checks& checks,
                double& worst_increase) {
  for (std::size_t j = 0; j < after.size(); ++j) {
    if (!after.provenance[j]) {
      checks.expect(false, "prototype " + std::to_string(j) + " has no source");
      continue;
    }
    const auto& src = *after.provenance[j];
    const auto idx = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), src.image_id) - ids.begin());
    checks.expect(idx < maps.size(), "unknown source image");
    if (idx >= maps.size()) continue;
    const auto patch = maps[idx].cell(src.h, src.w);
    const auto proto = after.prototype(j);
    checks.expect(std::equal(patch.begin(), patch.end(), proto.begin(), proto.end()),
                  "prototype is not bit-identical to its source patch");
    checks.expect(prototypes::max_similarity(maps[idx], proto).similarity == 0.0,
                  "g_j != 0 on source image");
  }
  const double a0 = prototypes::alignment_loss(before, maps, prototypes::assign_samples(before, maps));
  const double a1 = prototypes::alignment_loss(after, maps, prototypes::assign_samples(after, maps));
  worst_increase = std::max(worst_increase, a1 - a0);
  checks.expect(a1 <= a0, "alignment loss rose from " + fmt(a0) + " to " + fmt(a1));
}

Outcome ac8_push() {
  Rng rng(808);
  Checks checks;
  double worst_increase = -std::numeric_limits<double>::infinity();
  std::size_t pushed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(5), h = 1 + rng.index(8), w = 1 + rng.index(8);
    std::vector<FeatureMap> maps;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      maps.push_back({h, w, 16, oracle::random_values(h * w * 16, rng)});
      ids.push_back("x" + std::to_string(i));
    }
    const auto bank = bank_from(random_tensor({1 + rng.index(10), 16}, rng), prototypes::HeadKind::kPPNet);
    const auto after = prototypes::push_prototypes(bank, maps, ids);
    pushed += after.size();
    check_push(bank, after, maps, ids, checks, worst_increase);
  }

  // Trained heads on extractor features of phantoms.
  std::vector<Tensor> images;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 12; ++i) {
    images.push_back(phantom::generate_phantom(900 + i, 16).image);
    ids.push_back("phantom_" + std::to_string(i));
  }
  prototypes::ExtractorConfig ecfg;
  ecfg.depth = 8;
  ecfg.epochs = 3;
  auto trained = prototypes::train_extractor(images, ecfg, rng);
  const auto maps = trained.extractor.features(images);
  prototypes::HeadConfig hcfg;
  hcfg.prototypes = 5;
  hcfg.epochs = 30;
  for (auto head : {prototypes::HeadKind::kPPNet, prototypes::HeadKind::kEPPNet}) {
    const auto result = prototypes::train_head(head, maps, ids, hcfg, rng);
    pushed += result.bank.size();
    check_push(bank_from(result.learned, head), result.bank, maps, ids, checks, worst_increase);
  }
  return checks.outcome(std::to_string(pushed) + " pushed prototypes (random banks + trained ppnet/eppnet); "
                        "largest alignment change " + fmt(worst_increase));
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  std::istringstream in(slurp(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  if (!std::getline(in, line) || line != header) {
    fail(ErrorKind::kFormat, path.filename().string() + " header is '" + line + "'");
  }
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

double number(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  require(used == text.size() && std::isfinite(v), ErrorKind::kFormat, "not a finite number: " + text);
  return v;
}

struct PipelineRun {
  bool ran = false;
  std::vector<std::pair<std::string, int>> exit_codes;
  double seconds = 0.0;
  fs::path out;
  harness::ExperimentConfig config;
};

PipelineRun run_pipeline(const std::string& cli, const fs::path& config, const fs::path& workdir) {
  PipelineRun run;
  run.out = workdir / "smoke";
  run.config = harness::load_config(config);
  fs::remove_all(run.out);
  fs::create_directories(workdir);
  const auto log = workdir / "cli.log";
  fs::remove(log);
  const auto start = Clock::now();
  for (const char* cmd : {"gen-data", "train-diffusion", "sample", "trajectory", "train-proto", "explain",
                          "evaluate", "compare"}) {
    const std::string line = "\"" + cli + "\" " + cmd + " --config \"" + config.string() + "\" --out \"" +
                             run.out.string() + "\" >> \"" + log.string() + "\" 2>&1";
    const int status = std::system(line.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    run.exit_codes.emplace_back(cmd, code);
    if (code != 0) break;
  }
  run.seconds = seconds_since(start);
  run.ran = true;
  return run;
}

Outcome ac9_faithfulness(const PipelineRun& run) {
  Checks checks;
  const harness::Layout layout{run.out};
  const auto summary = read_csv(layout.comparison_csv(), "head,m,count,mean_faithfulness,sd_faithfulness");
  const auto per_image = read_csv(layout.faithfulness_rows(), "image_id,head,faithfulness");
  std::map<std::string, std::vector<double>> rows;
  for (const auto& r : per_image) {
    checks.expect(r.size() == 3, "malformed per-image row");
    if (r.size() == 3) rows[r[1]].push_back(number(r[2]));
  }
  checks.expect(summary.size() == run.config.prototypes.heads.size(), "one row per configured head");
  std::string report;
  double worst = 0.0;
  for (const auto& r : summary) {
    if (r.size() != 5) {
      checks.expect(false, "malformed comparison row");
      continue;
    }
    const double m = number(r[1]);
    const double mean = number(r[3]);
    checks.expect(mean >= 0.0 && mean <= 1.0 / m, r[0] + " mean F " + fmt(mean) + " outside [0,1/m]");
    const auto& values = rows[r[0]];
    checks.expect(values.size() == static_cast<std::size_t>(number(r[2])), r[0] + " per-image row count");
    for (double v : values) checks.expect(v >= 0.0 && v <= 1.0 / m, r[0] + " per-image F outside [0,1/m]");
    const auto stats = metrics::summarize(values);
    worst = std::max({worst, std::abs(stats.mean - mean), std::abs(stats.stddev - number(r[4]))});
    report += (report.empty() ? "" : ", ") + r[0] + " " + fmt(mean);

    // Per-image rows also agree with the explanation files.
    for (const auto& pr : per_image) {
      if (pr.size() != 3 || pr[1] != r[0]) continue;
      const auto doc = json::parse(slurp(layout.explanations_dir() / (pr[0] + ".json")));
      const double f = doc.at("reports").at(r[0]).at("faithfulness").get<double>();
      worst = std::max(worst, std::abs(f - number(pr[2])));
    }
  }
  checks.expect(worst <= 1e-9, "inconsistency " + fmt(worst));
  const auto comparison = json::parse(slurp(layout.comparison_json()));
  std::string ordering;
  for (const auto& h : comparison.at("ordering")) ordering += (ordering.empty() ? "" : " > ") + h.get<std::string>();
  return checks.outcome("mean F (m=" + std::to_string(run.config.prototypes.m) + "): " + report +
                        "; max row/summary/explanation gap " + fmt(worst) + "; observed ordering " + ordering +
                        " (reported, not asserted)");
}

void expect_pgm(const fs::path& path, std::size_t h, std::size_t w, Checks& checks) {
  if (!fs::exists(path)) {
    checks.expect(false, "missing " + path.filename().string());
    return;
  }
  const auto image = phantom::load_image(path);
  checks.expect(h == 0 || (image.dim(0) == h && image.dim(1) == w), path.filename().string() + " has wrong size");
}

Outcome ac10_end_to_end(const PipelineRun& run) {
  Checks checks;
  std::string failed_cmd;
  for (const auto& [cmd, code] : run.exit_codes) {
    checks.expect(code == 0, cmd + " exited " + std::to_string(code));
    if (code != 0) failed_cmd = cmd;
  }
  checks.expect(run.exit_codes.size() == 8, "pipeline stopped early");
  checks.expect(run.seconds < 600.0, "pipeline took " + fmt(run.seconds) + " s");
  if (!failed_cmd.empty()) return checks.outcome("pipeline failed at " + failed_cmd);

  const auto& cfg = run.config;
  const harness::Layout layout{run.out};
  const std::size_t n = cfg.data.size;
  const std::size_t m = cfg.prototypes.m;
  std::size_t files = 0;
  auto present = [&](const fs::path& p) {
    const bool ok = fs::exists(p);
    checks.expect(ok, "missing " + fs::relative(p, run.out).string());
    files += ok;
    return ok;
  };

  // Dataset.
  if (present(layout.manifest())) {
    const auto manifest = json::parse(slurp(layout.manifest()));
    checks.expect(manifest.at("config_hash").is_string(), "manifest config_hash");
    const auto& items = manifest.at("items");
    checks.expect(items.size() == cfg.data.count, "manifest item count");
    std::set<std::string> splits;
    for (const auto& item : items) {
      for (const char* key : {"id", "image", "mask", "split"}) checks.expect(item.at(key).is_string(), key);
      checks.expect(item.at("seed").is_number_unsigned(), "manifest seed");
      splits.insert(item.at("split").get<std::string>());
      expect_pgm(layout.data_dir() / item.at("image").get<std::string>(), n, n, checks);
      expect_pgm(layout.data_dir() / item.at("mask").get<std::string>(), n, n, checks);
    }
    checks.expect(splits == std::set<std::string>{"train", "val"}, "manifest splits");
  }

  // Diffusion artifacts.
  if (present(layout.diffusion_log())) {
    const auto rows = read_csv(layout.diffusion_log(), "epoch,mean_loss");
    checks.expect(rows.size() == cfg.diffusion.epochs, "one loss row per epoch");
    for (const auto& r : rows) checks.expect(r.size() == 2 && number(r[1]) >= 0.0, "loss row");
  }
  if (present(layout.denoiser())) {
    Rng rng(0);
    diffusion::DenoiserConfig dcfg;
    dcfg.image_size = n;
    dcfg.base_width = cfg.diffusion.base_width;
    dcfg.time_dim = cfg.diffusion.time_dim;
    diffusion::DenoiserNet net(dcfg, rng);
    net.parameters().assign_from(load_checkpoint(layout.denoiser()));
  }
  std::vector<std::string> sample_ids;
  if (present(layout.samples_index())) {
    const auto index = json::parse(slurp(layout.samples_index()));
    checks.expect(index.at("samples").size() == cfg.sampling.count, "sample count");
    for (const auto& s : index.at("samples")) {
      sample_ids.push_back(s.at("id").get<std::string>());
      checks.expect(s.at("mask_id").is_string() && s.at("seed").is_number_unsigned(), "sample entry");
      expect_pgm(layout.samples_dir() / s.at("image").get<std::string>(), n, n, checks);
    }
  }
  if (present(layout.trajectory_dir() / "trajectory.csv")) {
    const auto rows = read_csv(layout.trajectory_dir() / "trajectory.csv", "t,eps_mag");
    std::vector<std::size_t> expected;
    for (std::size_t t = cfg.diffusion.steps; t-- > 0;) {
      if (diffusion::records_frame(t, cfg.diffusion.steps, cfg.sampling.trajectory_stride)) expected.push_back(t);
    }
    checks.expect(rows.size() == expected.size(), "trajectory frame count");
    for (std::size_t i = 0; i < std::min(rows.size(), expected.size()); ++i) {
      checks.expect(static_cast<std::size_t>(number(rows[i][0])) == expected[i], "trajectory t order");
      checks.expect(number(rows[i][1]) >= 0.0, "eps_mag >= 0");
      char name[40];
      std::snprintf(name, sizeof(name), "frame_t%04zu.pgm", expected[i]);
      expect_pgm(layout.trajectory_dir() / name, n, n, checks);
      std::snprintf(name, sizeof(name), "eps_t%04zu.pgm", expected[i]);
      expect_pgm(layout.trajectory_dir() / name, n, n, checks);
    }
  }

  // Prototype artifacts.
  if (present(layout.extractor()) && present(layout.extractor_info())) {
    prototypes::ExtractorConfig ecfg;
    ecfg.depth = cfg.prototypes.feature_depth;
    prototypes::FeatureExtractor::load(layout.extractor(), ecfg);
  }
  for (auto head : cfg.prototypes.heads) {
    const auto stem = layout.bank(head);
    if (present(stem.string() + ".ckpt") && present(stem.string() + ".json")) {
      const auto bank = prototypes::load_bank(stem);
      checks.expect(bank.size() == m && bank.head == head, "bank " + prototypes::to_string(head));
    }
  }
  for (const auto& id : sample_ids) {
    if (!present(layout.explanations_dir() / (id + ".json"))) continue;
    const auto doc = json::parse(slurp(layout.explanations_dir() / (id + ".json")));
    checks.expect(doc.at("image_id") == id, "explanation image_id");
    checks.expect(doc.at("reports").size() == cfg.prototypes.heads.size(), "one report per head");
    for (const auto& [head, body] : doc.at("reports").items()) {
      const auto report = prototypes::report_from_json(body);
      checks.expect(report.m == m && report.records.size() == m, "report size");
      double total = 0.0;
      for (const auto& r : report.records) total += r.nis;
      checks.expect(std::abs(total - 1.0) <= 1e-9, "report NIS sum");
    }
  }

  // Metrics and comparison.
  if (present(layout.metrics_csv())) {
    const auto rows = read_csv(layout.metrics_csv(), "image_id,psnr,ssim,lpips,dice");
    checks.expect(rows.size() == cfg.sampling.count, "metrics rows");
    for (const auto& r : rows) {
      checks.expect(r.size() == 5, "metrics row width");
      for (std::size_t k = 1; k < r.size(); ++k) number(r[k]);
    }
  }
  if (present(layout.metrics_summary())) {
    const auto s = json::parse(slurp(layout.metrics_summary()));
    for (const char* key : {"psnr", "ssim", "lpips", "dice"}) {
      checks.expect(s.at(key).at("mean").is_number() && s.at(key).at("sd").is_number(), key);
    }
    checks.expect(s.at("frechet_distance").is_number(), "frechet distance");
  }
  if (present(layout.nis_rows())) {
    const auto rows = read_csv(layout.nis_rows(), "image_id,head,prototype,nis");
    checks.expect(rows.size() == cfg.sampling.count * cfg.prototypes.heads.size() * m, "nis rows");
  }
  present(layout.comparison_csv());
  present(layout.faithfulness_rows());
  if (present(layout.comparison_json())) {
    const auto c = json::parse(slurp(layout.comparison_json()));
    checks.expect(c.at("heads").size() == cfg.prototypes.heads.size(), "comparison heads");
    checks.expect(c.at("ordering").size() == cfg.prototypes.heads.size(), "comparison ordering");
  }
  if (present(run.out / "comparison_bar.pgm")) expect_pgm(run.out / "comparison_bar.pgm", 0, 0, checks);
  for (auto head : cfg.prototypes.heads) {
    const auto hist = run.out / ("nis_hist_" + prototypes::to_string(head) + ".pgm");
    if (present(hist)) expect_pgm(hist, 0, 0, checks);
  }
  return checks.outcome("8 commands exit 0 in " + fmt(run.seconds, "%.1f") + " s; " + std::to_string(files) +
                        " declared outputs checked (plus every image and frame)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protodiff acceptance run"};
  std::string cli, config, workdir;
  app.add_option("--cli", cli, "path to the protodiff executable")->required();
  app.add_option("--config", config, "smoke configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--workdir", workdir, "scratch directory for the CLI run")->required();
  CLI11_PARSE(app, argc, argv);

  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("error: ") + e.what()};
    }
  };

  std::vector<Outcome> results(10);
  results[0] = guarded(ac1_autodiff);
  results[1] = guarded(ac2_forward_process);
  std::optional<Overfit> overfit;
  try {
    overfit = train_overfit(kOverfitSteps);
  } catch (const std::exception& e) {
    results[2] = results[3] = Outcome{false, std::string("training failed: ") + e.what()};
  }
  if (overfit) {
    results[2] = guarded([&] { return ac3_overfit(*overfit); });
    results[3] = guarded([&] { return ac4_trajectory(*overfit); });
  }
  results[4] = guarded(ac5_metrics);
  results[5] = guarded(ac6_prototype_oracles);
  results[6] = guarded(ac7_nis);
  results[7] = guarded(ac8_push);
  PipelineRun run;
  try {
    run = run_pipeline(cli, config, workdir);
  } catch (const std::exception& e) {
    results[8] = results[9] = Outcome{false, std::string("pipeline error: ") + e.what()};
  }
  if (run.ran) {
    results[9] = guarded([&] { return ac10_end_to_end(run); });
    const bool completed = run.exit_codes.size() == 8 && run.exit_codes.back().second == 0;
    results[8] = completed ? guarded([&] { return ac9_faithfulness(run); })
                           : Outcome{false, "pipeline did not complete"};
  }

  int failures = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::printf("AC%zu %s  %s\n", i + 1, results[i].pass ? "PASS" : "FAIL", results[i].detail.c_str());
    failures += results[i].pass ? 0 : 1;
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
