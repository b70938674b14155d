#ifndef CMPP_H
#define CMPP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmppController {
  CMPP_CONTROLLER_FIXED_TIME = 0,
  CMPP_CONTROLLER_MAX_PRESSURE = 1,
  CMPP_CONTROLLER_CAPACITY_AWARE_BACKPRESSURE = 2,
  CMPP_CONTROLLER_CMPP_GREEDY = 3,
  CMPP_CONTROLLER_CMPP_ADMM = 4,
} CmppController;

typedef enum CmppMode {
  CMPP_MODE_FLUID = 0,
  CMPP_MODE_TOKEN = 1,
} CmppMode;

typedef enum CmppStatus {
  CMPP_STATUS_OK = 0,
  CMPP_STATUS_NULL_POINTER = 1,
  CMPP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The scenario or controller configuration was rejected.
   */
  CMPP_STATUS_VALIDATION = 3,
  /**
   * The simulation failed while running.
   */
  CMPP_STATUS_RUNTIME = 4,
  /**
   * A buffer was too small; the required length was written back.
   */
  CMPP_STATUS_BUFFER_TOO_SMALL = 5,
  CMPP_STATUS_PANIC = 6,
} CmppStatus;

typedef struct CmppSimulation CmppSimulation;

/**
 * Running totals after the last step.
 */
typedef struct CmppTotals {
  uint64_t time;
  double entered;
  double exited;
  double in_network;
  double total_queue;
  /**
   * Token mode only; zero in fluid mode.
   */
  uint64_t completed;
  double mean_travel_steps;
} CmppTotals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * NUL-terminated crate version. Static; do not free.
 */
const char *cmpp_version(void);

/**
 * Message for the last failed call on this thread, or null after a
 * successful one. Valid until the next call on the same thread.
 */
const char *cmpp_last_error(void);

/**
 * Grid with the default geometry and Poisson demand at `load`
 * times the busiest intersection's service capacity.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum CmppStatus cmpp_simulation_from_grid(uint32_t rows,
                                          uint32_t cols,
                                          double load,
                                          enum CmppController controller,
                                          enum CmppMode mode,
                                          uint64_t seed,
                                          struct CmppSimulation **out);

/**
 * Builds a simulation from scenario TOML. `base_dir` anchors relative file
 * references and may be null (current directory). `controller_label`
 * selects one of the scenario's controllers by label; null takes the first.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be valid.
 */
enum CmppStatus cmpp_simulation_from_scenario(const char *scenario_toml,
                                              const char *base_dir,
                                              const char *controller_label,
                                              uint64_t seed,
                                              struct CmppSimulation **out);

/**
 * # Safety
 * `sim` must come from a constructor above and not be used afterwards.
 */
void cmpp_simulation_free(struct CmppSimulation *sim);

/**
 * Advances `steps` decision steps.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum CmppStatus cmpp_simulation_step(struct CmppSimulation *sim, uint64_t steps);

/**
 * # Safety
 * `sim` must be a live handle and `intersections`/`movements` valid or null.
 */
enum CmppStatus cmpp_simulation_dimensions(const struct CmppSimulation *sim,
                                           size_t *intersections,
                                           size_t *movements);

/**
 * # Safety
 * `sim` must be a live handle and `out` valid.
 */
enum CmppStatus cmpp_simulation_totals(const struct CmppSimulation *sim, struct CmppTotals *out);

/**
 * Copies one queue length per movement into `buf`. `len` holds the buffer
 * capacity on entry and the movement count on return.
 *
 * # Safety
 * `sim` must be a live handle, `len` valid, `buf` valid for `*len` doubles.
 */
enum CmppStatus cmpp_simulation_queues(const struct CmppSimulation *sim, double *buf, size_t *len);

/**
 * Phase index per intersection chosen at the last step (zeros before the
 * first step). Same buffer protocol as [`cmpp_simulation_queues`].
 *
 * # Safety
 * As for [`cmpp_simulation_queues`].
 */
enum CmppStatus cmpp_simulation_phases(const struct CmppSimulation *sim,
                                       uint32_t *buf,
                                       size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMPP_H */
