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


#include "protodiff.h"

#include <exception>
#include <new>
#include <string>
#include <vector>

#include "protodiff/error.hpp"
#include "protodiff/harness.hpp"
#include "protodiff/metrics.hpp"

struct pd_experiment {
  protodiff::harness::Experiment impl;
  std::string summary;
};

namespace {

using protodiff::ErrorKind;

thread_local std::string last_error;

pd_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kShapeMismatch:
    case ErrorKind::kState:
      return PD_ERR_USAGE;
    case ErrorKind::kConfig:
      return PD_ERR_CONFIG;
    case ErrorKind::kMissingPrerequisite:
      return PD_ERR_MISSING;
    case ErrorKind::kNonFinite:
    case ErrorKind::kNumeric:
      return PD_ERR_NUMERIC;
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
      return PD_ERR_IO;
  }
  return PD_ERR_INTERNAL;
}

pd_status usage(const char* message) {
  last_error = message;
  return PD_ERR_USAGE;
}

template <typename F>
pd_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return PD_OK;
  } catch (const protodiff::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return PD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return PD_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return PD_ERR_INTERNAL;
  }
}

template <typename F>
pd_status command(pd_experiment* experiment, F&& body) {
  if (experiment == nullptr) return usage("experiment handle is null");
  return guarded([&] { experiment->summary = body(experiment->impl); });
}

std::optional<protodiff::prototypes::HeadKind> head_of(const char* head) {
  if (head == nullptr || *head == '\0') return std::nullopt;
  return protodiff::prototypes::parse_head(head);
}

protodiff::Tensor image(const double* values, size_t height, size_t width) {
  protodiff::require(values != nullptr, ErrorKind::kInvalidArgument, "image pointer is null");
  return protodiff::Tensor::from({height, width},
                                 std::vector<double>(values, values + height * width));
}

}  // namespace

extern "C" {

const char* pd_version(void) { return "0.1.0"; }

const char* pd_status_name(pd_status status) {
  switch (status) {
    case PD_OK: return "ok";
    case PD_ERR_USAGE: return "usage";
    case PD_ERR_CONFIG: return "config";
    case PD_ERR_MISSING: return "missing-prerequisite";
    case PD_ERR_NUMERIC: return "numeric";
    case PD_ERR_IO: return "io";
    case PD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* pd_last_error_message(void) { return last_error.c_str(); }

pd_status pd_experiment_open(const char* config_path, pd_experiment** out) {
  if (out == nullptr) return usage("output handle pointer is null");
  *out = nullptr;
  if (config_path == nullptr) return usage("config path is null");
  return guarded([&] {
    auto config = protodiff::harness::load_config(config_path);
    *out = new pd_experiment{protodiff::harness::Experiment(std::move(config)), {}};
  });
}

void pd_experiment_close(pd_experiment* experiment) { delete experiment; }

pd_status pd_experiment_set_output_dir(pd_experiment* experiment, const char* dir) {
  if (dir == nullptr) return usage("output directory is null");
  return command(experiment, [&](auto& e) {
    e.set_output_dir(dir);
    return std::string();
  });
}

pd_status pd_experiment_set_seed(pd_experiment* experiment, uint64_t seed) {
  return command(experiment, [&](auto& e) {
    e.set_seed(seed);
    return std::string();
  });
}

const char* pd_experiment_last_summary(const pd_experiment* experiment) {
  return experiment == nullptr ? "" : experiment->summary.c_str();
}

pd_status pd_cmd_gen_data(pd_experiment* experiment) {
  return command(experiment, [](auto& e) { return e.gen_data(); });
}

pd_status pd_cmd_train_diffusion(pd_experiment* experiment) {
  return command(experiment, [](auto& e) { return e.train_diffusion(); });
}

pd_status pd_cmd_sample(pd_experiment* experiment, size_t count) {
  return command(experiment, [&](auto& e) { return e.sample(count); });
}

pd_status pd_cmd_trajectory(pd_experiment* experiment) {
  return command(experiment, [](auto& e) { return e.trajectory(); });
}

pd_status pd_cmd_train_proto(pd_experiment* experiment, const char* head) {
  return command(experiment, [&](auto& e) { return e.train_proto(head_of(head)); });
}

pd_status pd_cmd_explain(pd_experiment* experiment, const char* head,
                         const char* const* image_ids, size_t id_count) {
  if (id_count > 0 && image_ids == nullptr) return usage("image id array is null");
  return command(experiment, [&](auto& e) {
    std::vector<std::string> ids;
    for (size_t i = 0; i < id_count; ++i) {
      protodiff::require(image_ids[i] != nullptr, ErrorKind::kInvalidArgument, "image id is null");
      ids.emplace_back(image_ids[i]);
    }
    return e.explain(head_of(head), ids);
  });
}

pd_status pd_cmd_evaluate(pd_experiment* experiment) {
  return command(experiment, [](auto& e) { return e.evaluate(); });
}

pd_status pd_cmd_compare(pd_experiment* experiment) {
  return command(experiment, [](auto& e) { return e.compare(); });
}

pd_status pd_psnr(const double* x, const double* x_hat, size_t height, size_t width, double* out) {
  if (out == nullptr) return usage("output pointer is null");
  return guarded([&] { *out = protodiff::metrics::psnr(image(x, height, width), image(x_hat, height, width)); });
}

pd_status pd_ssim(const double* x, const double* x_hat, size_t height, size_t width, double* out) {
  if (out == nullptr) return usage("output pointer is null");
  return guarded([&] { *out = protodiff::metrics::ssim(image(x, height, width), image(x_hat, height, width)); });
}

pd_status pd_dice(const double* a, const double* b, size_t height, size_t width, double* out) {
  if (out == nullptr) return usage("output pointer is null");
  return guarded([&] { *out = protodiff::metrics::dice(image(a, height, width), image(b, height, width)); });
}

pd_status pd_faithfulness(const double* nis, const double* corr, size_t m, double* out) {
  if (out == nullptr) return usage("output pointer is null");
  if (m > 0 && (nis == nullptr || corr == nullptr)) return usage("input pointer is null");
  return guarded([&] {
    *out = protodiff::metrics::faithfulness({nis, m}, {corr, m});
  });
}

}  // extern "C"
