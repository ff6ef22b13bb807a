#ifndef TIOLI_H
#define TIOLI_H

/* Generated by cbindgen from the tioli-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum {
  /**
   * Success.
   */
  TIOLI_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TIOLI_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  TIOLI_STATUS_INVALID_UTF8 = 2,
  /**
   * The config could not be read, parsed, or validated; see
   * `tioli_last_error`.
   */
  TIOLI_STATUS_CONFIG_ERROR = 3,
  /**
   * The simulation failed; see `tioli_last_error`.
   */
  TIOLI_STATUS_RUN_ERROR = 4,
  /**
   * Internal panic; see `tioli_last_error`.
   */
  TIOLI_STATUS_PANIC = 5,
} TioliStatus;

/**
 * Opaque experiment handle: a validated config plus seed and trial count.
 */
typedef struct TioliExperiment TioliExperiment;

/**
 * Released outcome of a single survey run.
 */
typedef struct {
  /**
   * Final normalized estimate.
   */
  double estimate;
  /**
   * Total payments across all epochs.
   */
  double total_payments;
  /**
   * Epoch whose noisy count cleared the participation target.
   */
  uint32_t final_epoch;
  /**
   * Epochs executed.
   */
  uint32_t epochs_run;
} TioliSurveyResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an experiment from a config file path.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer;
 * on success the caller owns the handle and must release it with
 * [`tioli_experiment_free`].
 */
TioliStatus tioli_experiment_from_file(const char *path, TioliExperiment **out);

/**
 * Creates an experiment from config text.
 *
 * # Safety
 * Same contract as [`tioli_experiment_from_file`].
 */
TioliStatus tioli_experiment_from_string(const char *config_toml, TioliExperiment **out);

/**
 * Sets the master seed. All outputs are pure functions of (config, seed).
 *
 * # Safety
 * `handle` must be a live pointer from a constructor.
 */
TioliStatus tioli_experiment_set_seed(TioliExperiment *handle, uint64_t seed);

/**
 * Sets the batch size used by [`tioli_summary_json`].
 *
 * # Safety
 * `handle` must be a live pointer from a constructor.
 */
TioliStatus tioli_experiment_set_trials(TioliExperiment *handle, uint64_t trials);

/**
 * Releases an experiment handle. Null is a no-op.
 *
 * # Safety
 * `handle` must have come from a constructor and not been freed before.
 */
void tioli_experiment_free(TioliExperiment *handle);

/**
 * Runs one survey with the stream derived from (seed, trial) and fills
 * `result`.
 *
 * # Safety
 * `handle` and `result` must be valid pointers.
 */
TioliStatus tioli_survey_run(const TioliExperiment *handle,
                             uint64_t trial,
                             TioliSurveyResult *result);

/**
 * Runs the configured batch of trials and returns the aggregate summary as
 * JSON. Free the string with [`tioli_string_free`].
 *
 * # Safety
 * `handle` and `out_json` must be valid pointers.
 */
TioliStatus tioli_summary_json(const TioliExperiment *handle, char **out_json);

/**
 * Runs the batch and returns the benchmark cost comparison as JSON. Free
 * the string with [`tioli_string_free`].
 *
 * # Safety
 * `handle` and `out_json` must be valid pointers.
 */
TioliStatus tioli_benchmark_json(const TioliExperiment *handle, char **out_json);

/**
 * Runs the two-arm participation-privacy audit with the default scripts
 * (one flipped first-epoch decision) and returns the report as JSON. Free
 * the string with [`tioli_string_free`].
 *
 * # Safety
 * `handle` and `out_json` must be valid pointers.
 */
TioliStatus tioli_audit_json(const TioliExperiment *handle, uint64_t runs_per_arm, char **out_json);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must have been returned by a `*_json` function and not freed before.
 */
void tioli_string_free(char *s);

/**
 * Copies the current thread's last error message into `buffer` (truncated
 * if needed, always NUL-terminated when `length > 0`) and returns the full
 * message length in bytes, excluding the terminator. Returns 0 when no
 * error is recorded.
 *
 * # Safety
 * `buffer` must point to at least `length` writable bytes, or be null with
 * `length == 0` to query the required size.
 */
size_t tioli_last_error(char *buffer, size_t length);

/**
 * Static library version string; do not free.
 */
const char *tioli_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TIOLI_H */
