/* SPDX-License-Identifier: Apache-2.0 */
#ifndef SEMCC_SEMCC_H_
#define SEMCC_SEMCC_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SEMCC_API __declspec(dllexport)
#else
#define SEMCC_API __attribute__((visibility("default")))
#endif

/* Status codes. They double as process exit codes of the semcc tool. */
typedef enum semcc_status {
  SEMCC_OK = 0,
  SEMCC_ERR_INTERNAL = 1,
  SEMCC_ERR_CONFIG = 2,
  SEMCC_ERR_DATA = 3,
  SEMCC_ERR_NUMERIC = 4
} semcc_status;

/* Trained model loaded from a checkpoint directory. */
typedef struct semcc_model semcc_model;

/* Receives one line of progress text (no trailing newline). */
typedef void (*semcc_line_fn)(const char* line, void* user);

/* Message of the last failed call on this thread; "" when none. */
SEMCC_API const char* semcc_last_error(void);
SEMCC_API const char* semcc_version(void);
/* Releases strings returned through char** out parameters. */
SEMCC_API void semcc_free_string(char* s);

typedef struct semcc_split_sizes {
  int n_cd, n_cc, n_both, n_val, n_test;
} semcc_split_sizes;

/* Writes a synthetic dataset to out_dir. A non-empty out_dir is refused
   (SEMCC_ERR_DATA) unless force is nonzero, in which case it is replaced.
   *summary_json (optional) receives {"splits": {...}, "digest": "..."}. */
SEMCC_API semcc_status semcc_generate_dataset(const char* out_dir, uint64_t seed, semcc_split_sizes sizes,
                                              int image_size, int force, char** summary_json);
SEMCC_API semcc_status semcc_dataset_digest(const char* dir, char** digest);

/* Hash of a config file after defaults are applied. */
SEMCC_API semcc_status semcc_config_hash(const char* config_path, char** hash);

/* Trains per the config on data_dir; writes checkpoints, loss_log.jsonl and
   CSV curves under out_dir. config_path may be NULL for defaults. */
SEMCC_API semcc_status semcc_train(const char* config_path, const char* data_dir, const char* out_dir,
                                   semcc_line_fn progress, void* user);

/* Loads a checkpoint. When expected_config_path is given its hash must match
   the stored one. */
SEMCC_API semcc_status semcc_model_load(const char* ckpt_dir, const char* expected_config_path, semcc_model** out);
SEMCC_API void semcc_model_free(semcc_model* model);
SEMCC_API semcc_status semcc_model_config_hash(const semcc_model* model, char** hash);

/* Evaluates one split ("test" when NULL) and writes the JSON report to
   report_path (optional). *report_json (optional) receives the report. */
SEMCC_API semcc_status semcc_evaluate(const semcc_model* model, const char* data_dir, const char* split,
                                      const char* report_path, char** report_json);

/* Ensemble-selected caption of a PNG pair. */
SEMCC_API semcc_status semcc_caption(const semcc_model* model, const char* img_a, const char* img_b, char** caption);
/* Writes the predicted change mask as a 0/255 grayscale PNG. */
SEMCC_API semcc_status semcc_detect(const semcc_model* model, const char* img_a, const char* img_b,
                                    const char* out_mask);

/* Finite-difference suite in float (f64 = 0) or double. Returns
   SEMCC_ERR_NUMERIC when any check fails. */
SEMCC_API semcc_status semcc_gradcheck(int f64, uint64_t seed, int instances, semcc_line_fn progress, void* user);

#ifdef __cplusplus
}
#endif

#endif /* SEMCC_SEMCC_H_ */
