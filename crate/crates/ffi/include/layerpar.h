#ifndef LAYERPAR_H
#define LAYERPAR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpMode {
  LP_MODE_PAPER_LITERAL = 0,
  LP_MODE_SHAPE_PROPAGATING = 1,
} LpMode;

typedef enum LpParallelism {
  LP_PARALLELISM_DP = 0,
  LP_PARALLELISM_MP = 1,
} LpParallelism;

/**
 * Result of every fallible call.
 */
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_UTF8 = 2,
  LP_STATUS_PARSE = 3,
  LP_STATUS_INVALID_MODEL = 4,
  LP_STATUS_INVALID_PLAN = 5,
  LP_STATUS_INVALID_HARDWARE = 6,
  LP_STATUS_CAPACITY = 7,
  LP_STATUS_OUT_OF_RANGE = 8,
  LP_STATUS_UNKNOWN_NETWORK = 9,
  LP_STATUS_PANIC = 10,
} LpStatus;

typedef enum LpTopology {
  LP_TOPOLOGY_H_TREE = 0,
  LP_TOPOLOGY_TORUS = 1,
} LpTopology;

/**
 * A validated network and its shapes.
 */
typedef struct LpModel LpModel;

/**
 * A parallelism matrix with its traffic total.
 */
typedef struct LpPlan LpPlan;

/**
 * Simulation results.
 */
typedef struct LpReport LpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lp_last_error(void);

/**
 * Parses model-file text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum LpStatus lp_model_parse(const char *text, struct LpModel **out);

/**
 * Loads a built-in network by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum LpStatus lp_model_zoo(const char *name, struct LpModel **out);

/**
 * Changes the batch size in place.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum LpStatus lp_model_set_batch(struct LpModel *model, uint64_t batch);

/**
 * Number of weighted layers, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t lp_model_layer_count(const struct LpModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void lp_model_free(struct LpModel *model);

/**
 * Optimized plan for a `2^levels` array.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for writes.
 */
enum LpStatus lp_plan_partition(const struct LpModel *model,
                                uint32_t levels,
                                enum LpMode mode,
                                struct LpPlan **out);

/**
 * The same parallelism for every layer at every level.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for writes.
 */
enum LpStatus lp_plan_uniform(const struct LpModel *model,
                              uint32_t levels,
                              enum LpParallelism parallelism,
                              enum LpMode mode,
                              struct LpPlan **out);

/**
 * Number of hierarchy levels, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
size_t lp_plan_levels(const struct LpPlan *plan);

/**
 * Parallelism of `layer` at `level` (0 = top).
 *
 * # Safety
 * `plan` must be a live handle; `out` must be valid for writes.
 */
enum LpStatus lp_plan_get(const struct LpPlan *plan,
                          size_t level,
                          size_t layer,
                          enum LpParallelism *out);

/**
 * Total inter-accelerator bytes of one step under the plan.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
uint64_t lp_plan_total_bytes(const struct LpPlan *plan);

/**
 * Plan as JSON; release with `lp_string_free`.
 *
 * # Safety
 * `plan` must be a live handle; `out` must be valid for writes.
 */
enum LpStatus lp_plan_to_json(const struct LpPlan *plan, char **out);

/**
 * # Safety
 * `plan` must be null or a handle not yet freed.
 */
void lp_plan_free(struct LpPlan *plan);

/**
 * Simulates `steps` training steps. `hw_json` may be null for the default
 * hardware, or a JSON object overriding some of its fields.
 *
 * # Safety
 * Handles must be live; `hw_json` must be null or NUL-terminated; `out`
 * must be valid for writes.
 */
enum LpStatus lp_simulate(const struct LpModel *model,
                          const struct LpPlan *plan,
                          enum LpTopology topology,
                          const char *hw_json,
                          uint64_t steps,
                          struct LpReport **out);

/**
 * Seconds for one step, or NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double lp_report_step_time(const struct LpReport *report);

/**
 * Joules over all simulated steps, or NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double lp_report_energy(const struct LpReport *report);

/**
 * Inter-accelerator bytes over all simulated steps.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
uint64_t lp_report_comm_bytes(const struct LpReport *report);

/**
 * Full report as JSON; release with `lp_string_free`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for writes.
 */
enum LpStatus lp_report_to_json(const struct LpReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void lp_report_free(struct LpReport *report);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void lp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYERPAR_H */
