/* Minimal embedding example.
 *
 * Build (from the workspace root, after `cargo build -p tioli-ffi`):
 *
 *   cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *      target/debug/libtioli_ffi.a -lm -lpthread -ldl -o smoke
 */
#include <stdio.h>

#include "tioli.h"

static const char *CONFIG =
    "schema_version = 1\n"
    "[mechanism]\n"
    "alpha = 0.5\n"
    "eta = 0.1\n"
    "[population]\n"
    "types = [ { name = \"positive\", q = 1.0 }, { name = \"negative\", q = 0.0 } ]\n"
    "cells = [ { mass = 0.3, type = \"positive\", v = 0.0 },\n"
    "          { mass = 0.7, type = \"negative\", v = 0.0 } ]\n";

int main(void) {
  TioliExperiment *experiment = NULL;
  if (tioli_experiment_from_string(CONFIG, &experiment) != TIOLI_STATUS_OK) {
    char message[256];
    tioli_last_error(message, sizeof message);
    fprintf(stderr, "config error: %s\n", message);
    return 1;
  }
  tioli_experiment_set_seed(experiment, 7);

  TioliSurveyResult result;
  if (tioli_survey_run(experiment, 0, &result) != TIOLI_STATUS_OK) {
    fprintf(stderr, "survey failed\n");
    tioli_experiment_free(experiment);
    return 1;
  }
  printf("tioli %s: estimate %.4f after %u epoch(s), total paid %.2f\n",
         tioli_version(), result.estimate, result.final_epoch,
         result.total_payments);

  tioli_experiment_free(experiment);
  return 0;
}
