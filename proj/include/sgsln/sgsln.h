/* sgsln: binary change detection with an exchanging dual encoder-decoder.
 *
 * C interface to the shared library. All functions return SGSLN_OK (0) on
 * success or a negative status code; sgsln_last_error() carries a
 * human-readable message for the calling thread. Objects are opaque handles
 * released with their matching _free function.
 */
#ifndef SGSLN_H
#define SGSLN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SGSLN_API __declspec(dllexport)
#else
#define SGSLN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef int sgsln_status;

enum {
  SGSLN_OK = 0,
  SGSLN_ERR_INVALID_ARGUMENT = -1,
  SGSLN_ERR_IO = -2,
  SGSLN_ERR_RUNTIME = -3
};

/* Message for the most recent failure on this thread; never NULL. */
SGSLN_API const char* sgsln_last_error(void);

SGSLN_API const char* sgsln_version(void);

/* Releases strings returned through char** out-parameters. */
SGSLN_API void sgsln_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Run configuration: flat "key = value" text (see docs for the keys). */

typedef struct sgsln_config sgsln_config;

SGSLN_API sgsln_status sgsln_config_create(sgsln_config** out);
SGSLN_API sgsln_status sgsln_config_load(const char* path, sgsln_config** out);
SGSLN_API sgsln_status sgsln_config_set(sgsln_config* cfg, const char* key, const char* value);
SGSLN_API sgsln_status sgsln_config_get(const sgsln_config* cfg, const char* key, char** out);
SGSLN_API sgsln_status sgsln_config_dump(const sgsln_config* cfg, char** out);
SGSLN_API void sgsln_config_free(sgsln_config* cfg);

/* ------------------------------------------------------------------ */
/* Model handle. */

typedef struct sgsln_model sgsln_model;

SGSLN_API sgsln_status sgsln_model_create(const sgsln_config* cfg, sgsln_model** out);
SGSLN_API sgsln_status sgsln_model_load(const char* checkpoint_path, sgsln_model** out);
SGSLN_API sgsln_status sgsln_model_save(const sgsln_model* m, const char* checkpoint_path);
SGSLN_API void sgsln_model_free(sgsln_model* m);

SGSLN_API sgsln_status sgsln_model_param_total(const sgsln_model* m, uint64_t* out_total);
/* Text table of per-module learnable-scalar counts. */
SGSLN_API sgsln_status sgsln_model_param_table(const sgsln_model* m, char** out);
/* FLOPs of one forward pass at the given input extent. */
SGSLN_API sgsln_status sgsln_model_flops(const sgsln_model* m, int height, int width,
                                         double* out_flops);

/* ------------------------------------------------------------------ */
/* Commands. */

/* Generates `data.count` synthetic sample pairs of `data.scenario` at
 * `data.size` under out_dir (A/B/label PNG layout + manifest). A non-empty
 * out_dir is rejected unless force is nonzero. */
SGSLN_API sgsln_status sgsln_synth(const sgsln_config* cfg, const char* out_dir, int force);

/* Per-epoch training progress. */
typedef void (*sgsln_progress_fn)(int epoch, double loss, double val_f1, double lr,
                                  void* user_data);

/* Trains on data_dir (optionally validating on val_dir; data_dir when NULL),
 * writing best.ckpt and metrics.csv under out_dir. init_checkpoint, when
 * non-NULL, seeds the parameters from an existing checkpoint. */
SGSLN_API sgsln_status sgsln_train(const sgsln_config* cfg, const char* data_dir,
                                   const char* val_dir, const char* out_dir,
                                   const char* init_checkpoint, sgsln_progress_fn progress,
                                   void* user_data);

/* Evaluates a checkpoint against a dataset; out_metrics receives
 * {precision, recall, f1, iou}; out_report (optional) a text table. */
SGSLN_API sgsln_status sgsln_eval(const char* checkpoint_path, const char* data_dir,
                                  double out_metrics[4], char** out_report);

/* Runs inference on an image pair and writes a {0,255} mask PNG. When
 * write_branches is nonzero, also writes the half-resolution branch masks
 * next to out_png (suffixes _t1/_t2; EDED and DED only). */
SGSLN_API sgsln_status sgsln_predict(const char* checkpoint_path, const char* a_png,
                                     const char* b_png, const char* out_png, int write_branches);

/* Full finite-difference gradient suite. out_report receives the per-entry
 * table; out_max_rel_err the worst relative error. Returns SGSLN_OK also
 * when entries exceed tolerance; *out_pass reports the verdict. */
SGSLN_API sgsln_status sgsln_gradcheck(char** out_report, double* out_max_rel_err, int* out_pass);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SGSLN_H */
