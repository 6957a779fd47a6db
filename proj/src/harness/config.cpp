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


#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "protodiff/error.hpp"
#include "protodiff/harness.hpp"

namespace protodiff::harness {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::size_t line, const std::string& key, const std::string& value,
                            const std::string& expected) {
  fail(ErrorKind::kConfig, "config line " + std::to_string(line) + ": " + key + " = '" + value +
                               "' is not " + expected);
}

std::uint64_t parse_uint(std::size_t line, const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    bad_value(line, key, value, "a non-negative integer");
  }
  return out;
}

double parse_double(std::size_t line, const std::string& key, const std::string& value) {
  std::istringstream in(value);
  in.imbue(std::locale::classic());
  double out = 0.0;
  in >> out;
  if (!in || !in.eof() || !std::isfinite(out)) bad_value(line, key, value, "a finite number");
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::size_t, const std::string&,
                                  const std::string&)>;


template <typename Section, typename Field>
Setter uint_setter(Section ExperimentConfig::*section, Field Section::*field) {
  return [=](ExperimentConfig& c, std::size_t line, const std::string& key,
             const std::string& value) {
    (c.*section).*field = static_cast<Field>(parse_uint(line, key, value));
  };
}

template <typename Section>
Setter double_setter(Section ExperimentConfig::*section, double Section::*field) {
  return [=](ExperimentConfig& c, std::size_t line, const std::string& key,
             const std::string& value) { (c.*section).*field = parse_double(line, key, value); };
}

Setter metric_double(double metrics::MetricConfig::*field) {
  return [=](ExperimentConfig& c, std::size_t line, const std::string& key,
             const std::string& value) { c.metrics.metric.*field = parse_double(line, key, value); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.count", uint_setter(&ExperimentConfig::data, &DataSection::count)},
      {"data.size", uint_setter(&ExperimentConfig::data, &DataSection::size)},
      {"data.seed", uint_setter(&ExperimentConfig::data, &DataSection::seed)},
      {"data.background", double_setter(&ExperimentConfig::data, &DataSection::background)},
      {"data.texture_amplitude",
       double_setter(&ExperimentConfig::data, &DataSection::texture_amplitude)},
      {"data.noise_floor", double_setter(&ExperimentConfig::data, &DataSection::noise_floor)},

      {"diffusion.steps", uint_setter(&ExperimentConfig::diffusion, &DiffusionSection::steps)},
      {"diffusion.beta_start",
       double_setter(&ExperimentConfig::diffusion, &DiffusionSection::beta_start)},
      {"diffusion.beta_end",
       double_setter(&ExperimentConfig::diffusion, &DiffusionSection::beta_end)},
      {"diffusion.base_width",
       uint_setter(&ExperimentConfig::diffusion, &DiffusionSection::base_width)},
      {"diffusion.time_dim", uint_setter(&ExperimentConfig::diffusion, &DiffusionSection::time_dim)},
      {"diffusion.output_gain",
       double_setter(&ExperimentConfig::diffusion, &DiffusionSection::output_gain)},
      {"diffusion.epochs", uint_setter(&ExperimentConfig::diffusion, &DiffusionSection::epochs)},
      {"diffusion.batch_size",
       uint_setter(&ExperimentConfig::diffusion, &DiffusionSection::batch_size)},
      {"diffusion.learning_rate",
       double_setter(&ExperimentConfig::diffusion, &DiffusionSection::learning_rate)},

      {"sampling.count", uint_setter(&ExperimentConfig::sampling, &SamplingSection::count)},
      {"sampling.trajectory_stride",
       uint_setter(&ExperimentConfig::sampling, &SamplingSection::trajectory_stride)},

      {"prototypes.heads",
       [](ExperimentConfig& c, std::size_t line, const std::string& key,
          const std::string& value) {
         c.prototypes.heads.clear();
         for (const auto& name : split_list(value)) {
           try {
             c.prototypes.heads.push_back(prototypes::parse_head(name));
           } catch (const Error&) {
             bad_value(line, key, value, "a list of ppnet, eppnet, protopool");
           }
         }
       }},
      {"prototypes.m", uint_setter(&ExperimentConfig::prototypes, &PrototypeSection::m)},
      {"prototypes.lambda_div",
       double_setter(&ExperimentConfig::prototypes, &PrototypeSection::lambda_div)},
      {"prototypes.epochs", uint_setter(&ExperimentConfig::prototypes, &PrototypeSection::epochs)},
      {"prototypes.learning_rate",
       double_setter(&ExperimentConfig::prototypes, &PrototypeSection::learning_rate)},
      {"prototypes.feature_depth",
       uint_setter(&ExperimentConfig::prototypes, &PrototypeSection::feature_depth)},
      {"prototypes.extractor_epochs",
       uint_setter(&ExperimentConfig::prototypes, &PrototypeSection::extractor_epochs)},
      {"prototypes.extractor_batch_size",
       uint_setter(&ExperimentConfig::prototypes, &PrototypeSection::extractor_batch_size)},
      {"prototypes.extractor_learning_rate",
       double_setter(&ExperimentConfig::prototypes, &PrototypeSection::extractor_learning_rate)},

      {"metrics.peak", metric_double(&metrics::MetricConfig::peak)},
      {"metrics.k1", metric_double(&metrics::MetricConfig::k1)},
      {"metrics.k2", metric_double(&metrics::MetricConfig::k2)},
      {"metrics.psnr_cap", metric_double(&metrics::MetricConfig::psnr_cap)},
      {"metrics.ssim_window",
       [](ExperimentConfig& c, std::size_t line, const std::string& key,
          const std::string& value) { c.metrics.metric.ssim_window = parse_uint(line, key, value); }},
      {"metrics.lpips_weights",
       [](ExperimentConfig& c, std::size_t line, const std::string& key,
          const std::string& value) {
         const auto items = split_list(value);
         if (items.size() != 3) bad_value(line, key, value, "three comma-separated weights");
         for (std::size_t i = 0; i < 3; ++i) {
           c.metrics.metric.lpips_weights[i] = parse_double(line, key, items[i]);
         }
       }},
      {"metrics.dice_threshold",
       double_setter(&ExperimentConfig::metrics, &MetricSection::dice_threshold)},

      {"output.dir",
       [](ExperimentConfig& c, std::size_t line, const std::string& key,
          const std::string& value) {
         if (value.empty()) bad_value(line, key, value, "a directory path");
         c.output_dir = value;
       }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::kConfig, msg); };
  check(data.count >= 2, "data.count must be at least 2");
  check(data.size >= 16 && data.size % 4 == 0, "data.size must be >= 16 and divisible by 4");
  check(data.background >= 0.0 && data.background <= 1.0, "data.background must lie in [0,1]");
  check(data.texture_amplitude >= 0.0, "data.texture_amplitude must be >= 0");
  check(data.noise_floor >= 0.0, "data.noise_floor must be >= 0");
  check(diffusion.steps >= 1, "diffusion.steps must be >= 1");
  check(diffusion.beta_start > 0.0 && diffusion.beta_start <= diffusion.beta_end &&
            diffusion.beta_end < 1.0,
        "diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  check(diffusion.base_width >= 1, "diffusion.base_width must be >= 1");
  check(diffusion.time_dim >= 2 && diffusion.time_dim % 2 == 0,
        "diffusion.time_dim must be even and >= 2");
  check(diffusion.output_gain > 0.0, "diffusion.output_gain must be positive");
  check(diffusion.batch_size >= 1, "diffusion.batch_size must be >= 1");
  check(diffusion.learning_rate > 0.0, "diffusion.learning_rate must be positive");
  check(sampling.count >= 1, "sampling.count must be >= 1");
  check(sampling.trajectory_stride >= 1, "sampling.trajectory_stride must be >= 1");
  check(!prototypes.heads.empty(), "prototypes.heads must name at least one head");
  std::set<prototypes::HeadKind> unique(prototypes.heads.begin(), prototypes.heads.end());
  check(unique.size() == prototypes.heads.size(), "prototypes.heads lists a head twice");
  check(prototypes.m >= 1, "prototypes.m must be >= 1");
  check(prototypes.lambda_div >= 0.0, "prototypes.lambda_div must be >= 0");
  check(prototypes.learning_rate > 0.0, "prototypes.learning_rate must be positive");
  check(prototypes.feature_depth >= 1, "prototypes.feature_depth must be >= 1");
  check(prototypes.extractor_batch_size >= 1, "prototypes.extractor_batch_size must be >= 1");
  check(prototypes.extractor_learning_rate > 0.0,
        "prototypes.extractor_learning_rate must be positive");
  metrics.metric.validate();
  check(metrics.metric.ssim_window <= data.size, "metrics.ssim_window exceeds data.size");
  check(metrics.dice_threshold > 0.0 && metrics.dice_threshold <= 1.0,
        "metrics.dice_threshold must lie in (0,1]");
}

ExperimentConfig parse_config(const std::string& text) {
  static const std::set<std::string> sections = {"data",       "diffusion", "sampling",
                                                 "prototypes", "metrics",   "output"};
  ExperimentConfig config;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto content = raw;
    const auto hash = content.find('#');
    if (hash != std::string::npos) content.erase(hash);
    content = trim(content);
    if (content.empty() || content[0] == ';') continue;
    if (content.front() == '[') {
      require(content.back() == ']', ErrorKind::kConfig,
              "config line " + std::to_string(line) + ": malformed section header");
      section = trim(content.substr(1, content.size() - 2));
      require(sections.count(section) == 1, ErrorKind::kConfig,
              "config line " + std::to_string(line) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = content.find('=');
    require(eq != std::string::npos, ErrorKind::kConfig,
            "config line " + std::to_string(line) + ": expected key = value");
    require(!section.empty(), ErrorKind::kConfig,
            "config line " + std::to_string(line) + ": key outside any section");
    const auto key = section + "." + trim(content.substr(0, eq));
    const auto value = trim(content.substr(eq + 1));
    const auto it = setters().find(key);
    require(it != setters().end(), ErrorKind::kConfig,
            "config line " + std::to_string(line) + ": unknown key " + key);
    require(seen.insert(key).second, ErrorKind::kConfig,
            "config line " + std::to_string(line) + ": duplicate key " + key);
    it->second(config, line, key, value);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace protodiff::harness
