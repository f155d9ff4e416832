#ifndef NOWCAST_H
#define NOWCAST_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum NcStatus {
  NC_STATUS_OK = 0,
  NC_STATUS_NULL_ARGUMENT = 1,
  NC_STATUS_INVALID_UTF8 = 2,
  NC_STATUS_INVALID_INPUT = 3,
  NC_STATUS_PARSE = 4,
  NC_STATUS_IO = 5,
  NC_STATUS_CONFIG = 6,
  NC_STATUS_SCHEMA = 7,
  NC_STATUS_ESTIMATION = 8,
  NC_STATUS_MISSING_CELLS = 9,
  NC_STATUS_INCOMPLETE = 10,
  NC_STATUS_PANIC = 11,
} NcStatus;

/**
 * Metric selector for ratio queries.
 */
typedef enum NcMetric {
  NC_METRIC_MAE = 0,
  NC_METRIC_RMSE = 1,
} NcMetric;

/**
 * Prediction cube with its realized values.
 */
typedef struct NcCube NcCube;

/**
 * Ratio, revision and aggregate tables computed from a cube.
 */
typedef struct NcEvaluation NcEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *nc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nc_version(void);

/**
 * Creates an empty cube.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum NcStatus nc_cube_new(struct NcCube **out);

/**
 * Loads `cube.csv` and `actuals.csv` from a run's output directory.
 *
 * # Safety
 * `out_dir` must be a NUL-terminated path; `out` must be valid for writing.
 */
enum NcStatus nc_cube_load(const char *out_dir, struct NcCube **out);

/**
 * Releases a cube. Null is ignored.
 *
 * # Safety
 * `cube` must be null or a handle from this library not yet freed.
 */
void nc_cube_free(struct NcCube *cube);

/**
 * Adds one nowcast. `quarter` is written like `2016Q1`; `offset` is in
 * months, −2 to 2.
 *
 * # Safety
 * `cube` must be a live handle; strings must be NUL-terminated.
 */
enum NcStatus nc_cube_insert(struct NcCube *cube,
                             const char *methodology_id,
                             const char *period,
                             const char *quarter,
                             int32_t offset_months,
                             double value);

/**
 * Records the realized growth rate of `quarter`.
 *
 * # Safety
 * `cube` must be a live handle; `quarter` must be NUL-terminated.
 */
enum NcStatus nc_cube_set_actual(struct NcCube *cube, const char *quarter, double value);

/**
 * Number of nowcasts stored.
 *
 * # Safety
 * `cube` must be a live handle; `out` must be valid for writing.
 */
enum NcStatus nc_cube_len(const struct NcCube *cube, size_t *out);

/**
 * Computes every table for the cube. Fails on missing cells or actuals.
 *
 * # Safety
 * `cube` must be a live handle; `out` must be valid for writing.
 */
enum NcStatus nc_evaluate(const struct NcCube *cube, struct NcEvaluation **out);

/**
 * Releases an evaluation. Null is ignored.
 *
 * # Safety
 * `eval` must be null or a handle from this library not yet freed.
 */
void nc_evaluation_free(struct NcEvaluation *eval);

/**
 * Ratio to ARMA for one methodology at one offset.
 *
 * # Safety
 * `eval` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum NcStatus nc_ratio(const struct NcEvaluation *eval,
                       const char *period,
                       enum NcMetric which,
                       const char *methodology_id,
                       int32_t offset_months,
                       double *out);

/**
 * Mean of a methodology's five offset ratios (the Average row).
 *
 * # Safety
 * `eval` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum NcStatus nc_ratio_average(const struct NcEvaluation *eval,
                               const char *period,
                               enum NcMetric which,
                               const char *methodology_id,
                               double *out);

/**
 * Average revision between adjacent vintages, in the cube's units.
 *
 * # Safety
 * `eval` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum NcStatus nc_avg_revision(const struct NcEvaluation *eval,
                              const char *period,
                              const char *methodology_id,
                              double *out);

/**
 * Aggregate score in [0, 1], lower is better. Needs at least two
 * methodologies covering every period.
 *
 * # Safety
 * `eval` must be a live handle; `methodology_id` NUL-terminated; `out` writable.
 */
enum NcStatus nc_aggregate_score(const struct NcEvaluation *eval,
                                 const char *methodology_id,
                                 double *out);

/**
 * Runs the benchmark described by a TOML config file. `out_dir` may be
 * null to keep the config's directory. Returns `Incomplete` when some
 * cells failed; their count is written to `failed_cells` when non-null.
 *
 * # Safety
 * `config_path` must be null (all defaults) or NUL-terminated; `out_dir`
 * null or NUL-terminated; `failed_cells` null or writable.
 */
enum NcStatus nc_run(const char *config_path,
                     const char *out_dir,
                     bool synthetic,
                     size_t *failed_cells);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOWCAST_H */
