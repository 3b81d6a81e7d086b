#ifndef SEMALLOC_H
#define SEMALLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SemallocStatus {
  SEMALLOC_STATUS_OK = 0,
  SEMALLOC_STATUS_NULL_ARGUMENT = 1,
  SEMALLOC_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration, JSON or method name.
   */
  SEMALLOC_STATUS_INVALID_INPUT = 3,
  /**
   * Schema version mismatch in a JSON document.
   */
  SEMALLOC_STATUS_SCHEMA = 4,
  /**
   * The solution violates at least one constraint.
   */
  SEMALLOC_STATUS_AUDIT = 5,
  /**
   * Solver or matching failure.
   */
  SEMALLOC_STATUS_FAILURE = 6,
  SEMALLOC_STATUS_PANIC = 7,
} SemallocStatus;

/**
 * Run configuration with its fidelity models and solvers.
 */
typedef struct SemallocContext SemallocContext;

typedef struct SemallocScenario SemallocScenario;

typedef struct SemallocSolution SemallocSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library from the same thread.
 */
const char *semalloc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *semalloc_version(void);

/**
 * Builds a context from a JSON run configuration; null selects the
 * defaults.
 *
 * # Safety
 * `config_json` is null or a NUL-terminated string; `out` is writable.
 */
enum SemallocStatus semalloc_context_new(const char *config_json, struct SemallocContext **out);

/**
 * # Safety
 * `ctx` is null or was returned by [`semalloc_context_new`] and not freed.
 */
void semalloc_context_free(struct SemallocContext *ctx);

/**
 * Draws a scenario from the context's configuration.
 *
 * # Safety
 * `ctx` is a live context; `out` is writable.
 */
enum SemallocStatus semalloc_scenario_generate(const struct SemallocContext *ctx,
                                               uint64_t seed,
                                               struct SemallocScenario **out);

/**
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum SemallocStatus semalloc_scenario_from_json(const char *json, struct SemallocScenario **out);

/**
 * Serialises a scenario; release the string with [`semalloc_string_free`].
 *
 * # Safety
 * `scenario` is a live handle; `out` is writable.
 */
enum SemallocStatus semalloc_scenario_to_json(const struct SemallocScenario *scenario, char **out);

/**
 * Number of users in the scenario, 0 for a null handle.
 *
 * # Safety
 * `scenario` is null or a live handle.
 */
size_t semalloc_scenario_user_count(const struct SemallocScenario *scenario);

/**
 * # Safety
 * `scenario` is null or a live handle not yet freed.
 */
void semalloc_scenario_free(struct SemallocScenario *scenario);

/**
 * Runs one method (`proposed`, `random`, `sum_sr_max`, `conventional_k<k>`,
 * `conventional_opt_k`, `no_coop`) and audits the result.
 *
 * # Safety
 * `ctx` and `scenario` are live handles; `method` is a NUL-terminated
 * string; `out` is writable.
 */
enum SemallocStatus semalloc_solve(const struct SemallocContext *ctx,
                                   const struct SemallocScenario *scenario,
                                   const char *method,
                                   uint64_t seed,
                                   struct SemallocSolution **out);

/**
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum SemallocStatus semalloc_solution_from_json(const char *json, struct SemallocSolution **out);

/**
 * # Safety
 * `solution` is a live handle; `out` is writable.
 */
enum SemallocStatus semalloc_solution_to_json(const struct SemallocSolution *solution, char **out);

/**
 * # Safety
 * `solution` is a live handle; `out` is writable.
 */
enum SemallocStatus semalloc_solution_total_qoe(const struct SemallocSolution *solution,
                                                double *out);

/**
 * # Safety
 * `solution` is null or a live handle not yet freed.
 */
void semalloc_solution_free(struct SemallocSolution *solution);

/**
 * Checks every constraint. Writes the violation count to `violations`
 * (may be null) and returns `Audit` when it is nonzero.
 *
 * # Safety
 * All handles are live; `violations` is null or writable.
 */
enum SemallocStatus semalloc_audit(const struct SemallocContext *ctx,
                                   const struct SemallocScenario *scenario,
                                   const struct SemallocSolution *solution,
                                   size_t *violations);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void semalloc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMALLOC_H */
