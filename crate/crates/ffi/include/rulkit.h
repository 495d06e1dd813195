#ifndef RULKIT_H
#define RULKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RulkitStatus {
  RULKIT_STATUS_OK = 0,
  RULKIT_STATUS_NULL_POINTER = 1,
  RULKIT_STATUS_INVALID_ARGUMENT = 2,
  RULKIT_STATUS_IO = 3,
  RULKIT_STATUS_VERSION_MISMATCH = 4,
  RULKIT_STATUS_CORRUPT_CHECKPOINT = 5,
  RULKIT_STATUS_NON_MONOTONIC_TIMESTAMP = 6,
  RULKIT_STATUS_EMPTY = 7,
  RULKIT_STATUS_PANIC = 8,
} RulkitStatus;

/*
 Loaded checkpoint. Immutable; may be shared by several predictors.
 */
typedef struct RulkitModel RulkitModel;

/*
 Streaming estimator for one cell.
 */
typedef struct RulkitPredictor RulkitPredictor;

typedef struct RulkitEstimate {
  /*
   Grid time of the window's last row, seconds.
   */
  double timestamp_s;
  /*
   Remaining discharge throughput before end of life, amp-hours.
   */
  double remaining_ah;
} RulkitEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Loads a checkpoint file. On success `*out` owns a new model.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RulkitStatus rulkit_model_load(const char *path, struct RulkitModel **out);

/*
 Loads a checkpoint from memory.

 # Safety
 `data` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum RulkitStatus rulkit_model_load_bytes(const uint8_t *data,
                                          uintptr_t len,
                                          struct RulkitModel **out);

/*
 Releases a model. Predictors created from it stay valid.

 # Safety
 `model` must come from a load function and not be freed twice.
 */
void rulkit_model_free(struct RulkitModel *model);

/*
 Resampled rows needed before the first estimate; 0 for a null model.

 # Safety
 `model` must be null or a live model.
 */
uintptr_t rulkit_model_window_len(const struct RulkitModel *model);

/*
 Resampling period in seconds; 0 for a null model.

 # Safety
 `model` must be null or a live model.
 */
double rulkit_model_rate_s(const struct RulkitModel *model);

/*
 Creates a predictor sharing `model`'s parameters.

 # Safety
 `model` must be a live model and `out` a valid pointer.
 */
enum RulkitStatus rulkit_predictor_new(const struct RulkitModel *model,
                                       struct RulkitPredictor **out);

/*
 Feeds one sample. Completed estimates are queued for
 [`rulkit_predictor_pop`]; `*ready` (if non-null) receives the queue length.

 # Safety
 `predictor` must be live; `ready` null or valid.
 */
enum RulkitStatus rulkit_predictor_push(struct RulkitPredictor *predictor,
                                        double timestamp_s,
                                        double voltage_v,
                                        double current_a,
                                        double temperature_c,
                                        uintptr_t *ready);

/*
 Ends the stream, queueing any estimate on the final sample's grid row.

 # Safety
 `predictor` must be live; `ready` null or valid.
 */
enum RulkitStatus rulkit_predictor_finish(struct RulkitPredictor *predictor, uintptr_t *ready);

/*
 Takes the oldest queued estimate, or returns `RULKIT_STATUS_EMPTY`.

 # Safety
 `predictor` and `out` must be valid.
 */
enum RulkitStatus rulkit_predictor_pop(struct RulkitPredictor *predictor,
                                       struct RulkitEstimate *out);

/*
 # Safety
 `predictor` must come from [`rulkit_predictor_new`] and not be freed twice.
 */
void rulkit_predictor_free(struct RulkitPredictor *predictor);

/*
 State of health in percent: `100 * capacity / nominal`.

 # Safety
 `out` must be a valid pointer.
 */
enum RulkitStatus rulkit_soh_percent(double capacity_ah, double nominal_capacity_ah, double *out);

/*
 Message of the last failure on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *rulkit_last_error(void);

/*
 Library version, NUL-terminated, static.
 */
const char *rulkit_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RULKIT_H */
