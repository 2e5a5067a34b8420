#ifndef RAMPSIM_H
#define RAMPSIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  RS_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad design name, scenario code, geometry or configuration.
   */
  RS_STATUS_INVALID_CONFIG = 3,
  /**
   * Lane index out of range.
   */
  RS_STATUS_OUT_OF_RANGE = 4,
  /**
   * The simulation itself failed.
   */
  RS_STATUS_RUNTIME = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  RS_STATUS_PANIC = 6,
} RsStatus;

typedef enum RsLaneRole {
  RS_LANE_ROLE_LEFT = 0,
  RS_LANE_ROLE_MIDDLE = 1,
  RS_LANE_ROLE_SHORT = 2,
  RS_LANE_ROLE_DIVERGE = 3,
  RS_LANE_ROLE_GENERIC = 4,
} RsLaneRole;

/**
 * Opaque intersection design.
 */
typedef struct RsDesign RsDesign;

/**
 * Opaque result of one simulation run.
 */
typedef struct RsRunResult RsRunResult;

/**
 * Metrics for one northwest lane of a run.
 */
typedef struct RsLaneMetrics {
  enum RsLaneRole role;
  uint64_t n_vehicles;
  double mean_delay_s;
  double max_queue_ft;
} RsLaneMetrics;

/**
 * Vehicle counts at the end of a run.
 */
typedef struct RsCounts {
  uint64_t arrived;
  uint64_t injected;
  uint64_t discharged;
  uint64_t in_network;
  uint64_t deferred;
} RsCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful call. The pointer stays valid until the next call into this
 * library on the same thread.
 */
const char *rs_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rs_version(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void rs_string_free(char *s);

/**
 * Number of vehicles that fit in `length_ft` at `jam_spacing_ft`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum RsStatus rs_storage_capacity(double length_ft, double jam_spacing_ft, uint64_t *out);

/**
 * Builds a design with default geometry. `variant` is one of `BASELINE`,
 * `EXTENDED_SHORT`, `RIGHT_TURN_ONLY` or `ADDED_DIVERGE`.
 *
 * # Safety
 * `variant` must be a NUL-terminated string and `out` valid for writes.
 */
enum RsStatus rs_design_build(const char *variant, struct RsDesign **out);

/**
 * Frees a design. NULL is ignored.
 *
 * # Safety
 * `design` must come from [`rs_design_build`] and not have been freed.
 */
void rs_design_free(struct RsDesign *design);

/**
 * Number of lane segments in the design.
 *
 * # Safety
 * `design` must be a live handle and `out` valid for writes.
 */
enum RsStatus rs_design_lane_count(const struct RsDesign *design, uint64_t *out);

/**
 * Storage capacity of the northwest lane with the given role, an
 * [`RsLaneRole`] value. Taken as an integer so that stray values from C are
 * reported instead of being undefined behaviour.
 *
 * # Safety
 * `design` must be a live handle and `out` valid for writes.
 */
enum RsStatus rs_design_nw_capacity(const struct RsDesign *design, uint32_t role, uint64_t *out);

/**
 * Serializes the design as JSON. Free the string with [`rs_string_free`].
 *
 * # Safety
 * `design` must be a live handle and `out` valid for writes.
 */
enum RsStatus rs_design_to_json(const struct RsDesign *design, char **out);

/**
 * Simulates one design, scenario code and seed.
 *
 * `design` takes the command-line names (`baseline`, `extended`, `rto-i`,
 * `rto-ii`, `diverge`). `spec_json` may be NULL for the default sweep
 * settings; otherwise its `sim`, `geometry`, `controller` and `controlled`
 * fields apply and its design, code and seed lists are ignored.
 *
 * # Safety
 * String arguments must be NUL-terminated and `out` valid for writes.
 */
enum RsStatus rs_run(const char *design,
                     const char *code,
                     uint64_t seed,
                     const char *spec_json,
                     struct RsRunResult **out);

/**
 * Frees a run result. NULL is ignored.
 *
 * # Safety
 * `result` must come from [`rs_run`] and not have been freed.
 */
void rs_result_free(struct RsRunResult *result);

/**
 * Number of northwest lanes reported in the result.
 *
 * # Safety
 * `result` must be a live handle and `out` valid for writes.
 */
enum RsStatus rs_result_lane_count(const struct RsRunResult *result, uint64_t *out);

/**
 * Metrics of the `index`-th reported lane.
 *
 * # Safety
 * `result` must be a live handle and `out` valid for writes.
 */
enum RsStatus rs_result_lane(const struct RsRunResult *result,
                             uint64_t index,
                             struct RsLaneMetrics *out);

/**
 * Vehicle counts at the end of the run.
 *
 * # Safety
 * `result` must be a live handle and `out` valid for writes.
 */
enum RsStatus rs_result_counts(const struct RsRunResult *result, struct RsCounts *out);

/**
 * The result as CSV rows in the sweep output format, header included.
 * Free the string with [`rs_string_free`].
 *
 * # Safety
 * `result` must be a live handle and `out` valid for writes.
 */
enum RsStatus rs_result_to_csv(const struct RsRunResult *result, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAMPSIM_H */
