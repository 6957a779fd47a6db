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


// protodiff command-line driver. Links only the C API.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "protodiff.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string head;
  std::size_t count = 0;
  std::vector<std::string> ids;
};

int report(pd_status status, const pd_experiment* experiment) {
  if (status != PD_OK) {
    std::fprintf(stderr, "error [%s]: %s\n", pd_status_name(status), pd_last_error_message());
    return static_cast<int>(status);
  }
  std::printf("%s\n", pd_experiment_last_summary(experiment));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-conditioned diffusion on synthetic phantoms with prototype explanations"};
  app.set_version_flag("--version", std::string(pd_version()));
  app.require_subcommand(1, 1);

  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", opt.config, "experiment INI file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out,-o", opt.out, "output directory (overrides [output] dir)");
    sub->add_option("--seed", opt.seed, "data seed (overrides [data] seed)");
  };

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"gen-data", "generate the phantom dataset and manifest"},
      {"train-diffusion", "train the mask-conditioned denoiser"},
      {"sample", "generate images conditioned on validation masks"},
      {"trajectory", "record the reverse-process frames for one mask"},
      {"train-proto", "train the feature extractor and prototype heads"},
      {"explain", "write prototype explanations for images"},
      {"evaluate", "compute image metrics for the generated samples"},
      {"compare", "compare faithfulness across prototype heads"},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    const std::string name = c.name;
    if (name == "sample") {
      sub->add_option("--count,-n", opt.count, "number of samples (default from config)");
    }
    if (name == "train-proto" || name == "explain") {
      sub->add_option("--head", opt.head, "ppnet, eppnet or protopool (default: all configured)")
          ->check(CLI::IsMember({"ppnet", "eppnet", "protopool"}));
    }
    if (name == "explain") {
      sub->add_option("ids", opt.ids, "sample or dataset ids (default: all samples)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(PD_ERR_USAGE);
  }

  pd_experiment* raw = nullptr;
  pd_status status = pd_experiment_open(opt.config.c_str(), &raw);
  if (status != PD_OK) return report(status, nullptr);
  std::unique_ptr<pd_experiment, void (*)(pd_experiment*)> experiment(raw, pd_experiment_close);
  if (!opt.out.empty()) status = pd_experiment_set_output_dir(raw, opt.out.c_str());
  if (status == PD_OK && opt.seed) status = pd_experiment_set_seed(raw, *opt.seed);
  if (status != PD_OK) return report(status, raw);

  const std::string cmd = app.get_subcommands().front()->get_name();
  const char* head = opt.head.empty() ? nullptr : opt.head.c_str();
  if (cmd == "gen-data") {
    status = pd_cmd_gen_data(raw);
  } else if (cmd == "train-diffusion") {
    status = pd_cmd_train_diffusion(raw);
  } else if (cmd == "sample") {
    status = pd_cmd_sample(raw, opt.count);
  } else if (cmd == "trajectory") {
    status = pd_cmd_trajectory(raw);
  } else if (cmd == "train-proto") {
    status = pd_cmd_train_proto(raw, head);
  } else if (cmd == "explain") {
    std::vector<const char*> ids;
    for (const auto& id : opt.ids) ids.push_back(id.c_str());
    status = pd_cmd_explain(raw, head, ids.data(), ids.size());
  } else if (cmd == "evaluate") {
    status = pd_cmd_evaluate(raw);
  } else {
    status = pd_cmd_compare(raw);
  }
  return report(status, raw);
}
