/* C interface to the sarvel multi-static SAR imaging toolkit. */

#ifndef SARVEL_H
#define SARVEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible call.
typedef enum SarvelStatus {
  SARVEL_STATUS_OK = 0,
  // A required pointer argument was null.
  SARVEL_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SARVEL_STATUS_INVALID_UTF8 = 2,
  // The configuration failed to parse or validate.
  SARVEL_STATUS_CONFIG = 3,
  // The sparse solver hit its iteration budget; outputs were still
  // written and the result handle is valid.
  SARVEL_STATUS_SOLVER_NON_CONVERGENCE = 4,
  // A file could not be read or written.
  SARVEL_STATUS_IO = 5,
  // A precondition of the underlying API was violated.
  SARVEL_STATUS_CONTRACT = 6,
  // An internal panic was caught at the boundary.
  SARVEL_STATUS_PANIC = 7,
} SarvelStatus;

// Opaque experiment configuration handle.
typedef struct SarvelConfig SarvelConfig;

// Opaque result handle of one experiment run.
typedef struct SarvelRunResult SarvelRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library; statically allocated, do not free.
const char *sarvel_version(void);

// Most recent error message on the calling thread. Valid until the next
// failing call on this thread; do not free.
const char *sarvel_last_error_message(void);

// Free a string returned through a `char**` out-parameter.
//
// # Safety
// `s` must be null or a pointer previously returned by this library.
void sarvel_string_free(char *s);

// Load an experiment configuration from a TOML file.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum SarvelStatus sarvel_config_from_file(const char *path, struct SarvelConfig **out);

// Load one of the shipped preset configurations by name.
//
// # Safety
// `name` must be a valid NUL-terminated string and `out` a valid pointer.
enum SarvelStatus sarvel_config_from_preset(const char *name, struct SarvelConfig **out);

// Replace all config seeds from a single master seed.
//
// # Safety
// `cfg` must be a live handle from this library.
enum SarvelStatus sarvel_config_set_seed(struct SarvelConfig *cfg, uint64_t seed);

// Validate a configuration. Returns OK when valid; CONFIG when issues were
// found. When `report_out` is non-null it receives the full human-readable
// report (free with `sarvel_string_free`).
//
// # Safety
// `cfg` must be a live handle; `report_out` may be null.
enum SarvelStatus sarvel_config_validate(const struct SarvelConfig *cfg, char **report_out);

// Destroy a config handle.
//
// # Safety
// `cfg` must be null or a live handle from this library, not yet freed.
void sarvel_config_free(struct SarvelConfig *cfg);

// Run the configured experiment and write its output file set into
// `out_dir`. On success (or solver non-convergence, which still writes
// outputs) `result_out` receives a result handle.
//
// # Safety
// `cfg` must be a live handle; `out_dir` a valid NUL-terminated string;
// `result_out` a valid pointer.
enum SarvelStatus sarvel_run(const struct SarvelConfig *cfg,
                             const char *out_dir,
                             struct SarvelRunResult **result_out);

// Per-pixel reflectivity magnitude error of a method ("ocd" or "mf").
//
// # Safety
// `result` must be a live handle; `method` a valid string; `out` non-null.
enum SarvelStatus sarvel_result_pixel_error(const struct SarvelRunResult *result,
                                            const char *method,
                                            double *out);

// Detection precision and recall of a method at the configured threshold.
//
// # Safety
// Same contract as [`sarvel_result_pixel_error`]; either out-pointer may be
// null to skip it.
enum SarvelStatus sarvel_result_detection(const struct SarvelRunResult *result,
                                          const char *method,
                                          double *precision_out,
                                          double *recall_out);

// Destroy a result handle.
//
// # Safety
// `result` must be null or a live handle from this library, not yet freed.
void sarvel_run_result_free(struct SarvelRunResult *result);

// Range/cross-range resolution lower bounds of a forward-cone configuration.
//
// # Safety
// `rho_x_out` and `rho_y_out` must be valid pointers.
enum SarvelStatus sarvel_resolution_bounds(double f0_hz,
                                           double bandwidth_hz,
                                           double cone_width_rad,
                                           double *rho_x_out,
                                           double *rho_y_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SARVEL_H */
