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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "protodiff/error.hpp"
#include "protodiff/harness.hpp"
#include "protodiff/phantom.hpp"

using namespace protodiff;
using namespace protodiff::harness;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kState;
}

std::string error_text(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

const char* kTinyConfig = R"(
[data]
count = 12
size = 16
seed = 3

[diffusion]
steps = 10
beta_start = 0.01
beta_end = 0.5
base_width = 4
time_dim = 8
epochs = 2
batch_size = 4

[sampling]
count = 3
trajectory_stride = 4

[prototypes]
m = 3
epochs = 5
feature_depth = 4
extractor_epochs = 1
extractor_batch_size = 4
)";

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("protodiff_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const auto defaults = parse_config("");
  CHECK(defaults.data.count == 256);
  CHECK(defaults.diffusion.steps == 1000);
  CHECK(defaults.prototypes.heads.size() == 3);

  const auto c = parse_config(R"(
# comment line
; another comment
[data]
count = 20   # inline comment
seed = 9
[prototypes]
heads = protopool, ppnet
lambda_div = 0.25
[metrics]
lpips_weights = 0.5, 0.25, 0.25
dice_threshold = 0.4
[output]
dir = somewhere/else
)");
  CHECK(c.data.count == 20);
  CHECK(c.data.seed == 9);
  CHECK(c.prototypes.heads ==
        std::vector<prototypes::HeadKind>{prototypes::HeadKind::kProtoPool,
                                          prototypes::HeadKind::kPPNet});
  CHECK(c.prototypes.lambda_div == 0.25);
  CHECK(c.metrics.metric.lpips_weights[0] == 0.5);
  CHECK(c.metrics.dice_threshold == 0.4);
  CHECK(c.output_dir == fs::path("somewhere/else"));
}

TEST_CASE("config errors name the offending line") {
  CHECK(kind_of([] { parse_config("[data]\ncolour = 3\n"); }) == ErrorKind::kConfig);
  CHECK(error_text([] { parse_config("[data]\ncolour = 3\n"); }).find("line 2") !=
        std::string::npos);
  CHECK(error_text([] { parse_config("[nope]\n"); }).find("unknown section") != std::string::npos);
  CHECK(error_text([] { parse_config("[data]\nseed = 1\nseed = 2\n"); }).find("duplicate") !=
        std::string::npos);
  CHECK(kind_of([] { parse_config("[data]\ncount = many\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[data]\ncount = -4\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[diffusion]\nlearning_rate = 1e-3x\n"); }) ==
        ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("seed = 1\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[data\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[data]\njust words\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[prototypes]\nheads = ppnet, resnet\n"); }) ==
        ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[prototypes]\nheads = ppnet, ppnet\n"); }) ==
        ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[metrics]\nlpips_weights = 1, 2\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { load_config("/nonexistent/protodiff.ini"); }) == ErrorKind::kConfig);
}

TEST_CASE("config cross-field validation") {
  CHECK(kind_of([] { parse_config("[data]\nsize = 18\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[data]\nsize = 8\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[data]\ncount = 1\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[diffusion]\nbeta_start = 0.3\nbeta_end = 0.2\n"); }) ==
        ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[diffusion]\nbeta_end = 1.0\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[diffusion]\ntime_dim = 7\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[data]\nsize = 16\n[metrics]\nssim_window = 17\n"); }) ==
        ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[metrics]\ndice_threshold = 0\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("[prototypes]\nm = 0\n"); }) == ErrorKind::kConfig);
}

TEST_CASE("derived seeds are deterministic and distinct per stream") {
  CHECK(derive_seed(5, 1) == derive_seed(5, 1));
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    for (std::uint64_t stream = 0; stream < 8; ++stream) seen.insert(derive_seed(seed, stream));
  }
  CHECK(seen.size() == 24);
}

TEST_CASE("commands report missing prerequisites") {
  auto config = parse_config(kTinyConfig);
  config.output_dir = fresh_dir("missing");
  Experiment e(config);
  CHECK(kind_of([&] { e.train_diffusion(); }) == ErrorKind::kMissingPrerequisite);
  CHECK(kind_of([&] { e.sample(); }) == ErrorKind::kMissingPrerequisite);
  CHECK(kind_of([&] { e.train_proto(); }) == ErrorKind::kMissingPrerequisite);
  CHECK(kind_of([&] { e.explain(std::nullopt); }) == ErrorKind::kMissingPrerequisite);
  CHECK(kind_of([&] { e.evaluate(); }) == ErrorKind::kMissingPrerequisite);
  CHECK(kind_of([&] { e.compare(); }) == ErrorKind::kMissingPrerequisite);
  e.gen_data();
  CHECK(kind_of([&] { e.sample(); }) == ErrorKind::kMissingPrerequisite);
  CHECK(kind_of([&] { e.trajectory(); }) == ErrorKind::kMissingPrerequisite);

  // A dataset generated under a different data config is not silently reused.
  auto other = config;
  other.data.seed = 4;
  Experiment changed(other);
  CHECK(error_text([&] { changed.train_diffusion(); }).find("gen-data") != std::string::npos);
  fs::remove_all(config.output_dir);
}

TEST_CASE("end-to-end pipeline on a tiny configuration") {
  auto config = parse_config(kTinyConfig);
  const auto root = fresh_dir("pipeline");
  config.output_dir = root;
  Experiment e(config);
  const Layout& out = e.layout();

  CHECK(e.gen_data().find("12 phantoms") != std::string::npos);
  const auto manifest = slurp(out.manifest());
  e.gen_data();
  CHECK(slurp(out.manifest()) == manifest);

  e.train_diffusion();
  CHECK(fs::exists(out.denoiser()));
  {
    std::istringstream log(slurp(out.diffusion_log()));
    std::string line;
    std::size_t rows = 0;
    std::getline(log, line);
    CHECK(line == "epoch,mean_loss");
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 2);
  }

  e.sample();
  const auto index = nlohmann::json::parse(slurp(out.samples_index()));
  REQUIRE(index["samples"].size() == 3);
  const auto first = slurp(out.samples_dir() / "sample_0000.pgm");
  e.sample();
  CHECK(slurp(out.samples_dir() / "sample_0000.pgm") == first);
  // Samples are conditioned on validation masks (the last item here).
  CHECK(index["samples"][0]["mask_id"] == "phantom_0011");

  e.trajectory();
  CHECK(fs::exists(out.trajectory_dir() / "frame_t0009.pgm"));
  CHECK(fs::exists(out.trajectory_dir() / "frame_t0000.pgm"));
  CHECK(fs::exists(out.trajectory_dir() / "eps_t0005.pgm"));
  const auto traj = slurp(out.trajectory_dir() / "trajectory.csv");
  CHECK(traj.rfind("t,eps_mag\n9,", 0) == 0);

  CHECK(e.train_proto().find("extractor recon") != std::string::npos);
  for (auto h : config.prototypes.heads) {
    const auto bank = prototypes::load_bank(out.bank(h));
    CHECK(bank.size() == 3);
    CHECK(bank.head == h);
  }
  // A second run reuses the extractor and reproduces the banks exactly.
  const auto ppnet_bank = slurp(out.bank(prototypes::HeadKind::kPPNet).string() + ".ckpt");
  CHECK(e.train_proto(prototypes::HeadKind::kPPNet).find("reused extractor") != std::string::npos);
  CHECK(slurp(out.bank(prototypes::HeadKind::kPPNet).string() + ".ckpt") == ppnet_bank);

  e.explain(std::nullopt);
  const auto doc = nlohmann::json::parse(slurp(out.explanations_dir() / "sample_0001.json"));
  CHECK(doc["image_id"] == "sample_0001");
  CHECK(doc["reports"].size() == 3);
  for (const auto& [head, report] : doc["reports"].items()) {
    const auto parsed = prototypes::report_from_json(report);
    CHECK(parsed.m == 3);
    CHECK(parsed.faithfulness >= 0.0);
    CHECK(parsed.faithfulness <= 1.0 / 3.0 + 1e-12);
  }
  e.explain(prototypes::HeadKind::kEPPNet, {"phantom_0002"});
  const auto single = nlohmann::json::parse(slurp(out.explanations_dir() / "phantom_0002.json"));
  CHECK(single["reports"].size() == 1);
  CHECK(single["reports"].contains("eppnet"));
  CHECK(kind_of([&] { e.explain(std::nullopt, {"no_such_image"}); }) ==
        ErrorKind::kInvalidArgument);

  e.evaluate();
  const auto metrics_csv = slurp(out.metrics_csv());
  CHECK(metrics_csv.rfind("image_id,psnr,ssim,lpips,dice\n", 0) == 0);
  const auto summary = nlohmann::json::parse(slurp(out.metrics_summary()));
  CHECK(summary["count"] == 3);
  CHECK(summary["frechet_distance"].is_number());
  CHECK(summary["dice"]["mean"].get<double>() >= 0.0);

  e.compare();
  const auto comparison = nlohmann::json::parse(slurp(out.comparison_json()));
  CHECK(comparison["heads"].size() == 3);
  CHECK(comparison["ordering"].size() == 3);
  CHECK(fs::exists(root / "comparison_bar.pgm"));
  CHECK(fs::exists(root / "nis_hist_protopool.pgm"));
  const auto bar = phantom::load_image(root / "comparison_bar.pgm");
  CHECK(bar.rank() == 2);
  fs::remove_all(root);
}
