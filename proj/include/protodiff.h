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


/* C interface to the protodiff library. Every function returns a pd_status;
 * on failure pd_last_error_message() describes the most recent error on the
 * calling thread. Experiments are opaque handles released with
 * pd_experiment_close(). */

#ifndef PROTODIFF_H_
#define PROTODIFF_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define PD_API __attribute__((visibility("default")))
#else
#define PD_API
#endif

typedef enum pd_status {
  PD_OK = 0,
  PD_ERR_USAGE = 1,        /* invalid argument or shape */
  PD_ERR_CONFIG = 2,       /* configuration file rejected */
  PD_ERR_MISSING = 3,      /* an earlier pipeline stage has not been run */
  PD_ERR_NUMERIC = 4,      /* non-finite values or numerical failure */
  PD_ERR_IO = 5,           /* file system or file format error */
  PD_ERR_INTERNAL = 6
} pd_status;

typedef struct pd_experiment pd_experiment;

PD_API const char* pd_version(void);
PD_API const char* pd_status_name(pd_status status);
/* Message for the last failed call on this thread; "" if none. */
PD_API const char* pd_last_error_message(void);

/* Loads and validates an INI configuration. */
PD_API pd_status pd_experiment_open(const char* config_path, pd_experiment** out);
PD_API void pd_experiment_close(pd_experiment* experiment);
PD_API pd_status pd_experiment_set_output_dir(pd_experiment* experiment, const char* dir);
PD_API pd_status pd_experiment_set_seed(pd_experiment* experiment, uint64_t seed);
/* Summary line of the last successful command; valid until the next call on
 * the same handle. */
PD_API const char* pd_experiment_last_summary(const pd_experiment* experiment);

/* Pipeline commands. head may be NULL for all configured heads; otherwise
 * "ppnet", "eppnet" or "protopool". count 0 uses the configured value. */
PD_API pd_status pd_cmd_gen_data(pd_experiment* experiment);
PD_API pd_status pd_cmd_train_diffusion(pd_experiment* experiment);
PD_API pd_status pd_cmd_sample(pd_experiment* experiment, size_t count);
PD_API pd_status pd_cmd_trajectory(pd_experiment* experiment);
PD_API pd_status pd_cmd_train_proto(pd_experiment* experiment, const char* head);
PD_API pd_status pd_cmd_explain(pd_experiment* experiment, const char* head,
                                const char* const* image_ids, size_t id_count);
PD_API pd_status pd_cmd_evaluate(pd_experiment* experiment);
PD_API pd_status pd_cmd_compare(pd_experiment* experiment);

/* Image metrics on row-major height x width images with default settings. */
PD_API pd_status pd_psnr(const double* x, const double* x_hat, size_t height, size_t width,
                         double* out);
PD_API pd_status pd_ssim(const double* x, const double* x_hat, size_t height, size_t width,
                         double* out);
PD_API pd_status pd_dice(const double* a, const double* b, size_t height, size_t width,
                         double* out);
PD_API pd_status pd_faithfulness(const double* nis, const double* corr, size_t m, double* out);

#ifdef __cplusplus
}
#endif

#endif  /* PROTODIFF_H_ */
