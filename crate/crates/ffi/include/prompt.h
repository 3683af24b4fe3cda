#ifndef PROMPT_H
#define PROMPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of counters per HP block, in the simulator's counter order.
 */
#define PROMPT_COUNTERS 6

/**
 * Number of action branches per HP: llc, mbw, hpcf, becf, ucf.
 */
#define PROMPT_BRANCHES 5

/**
 * Result of every fallible call.
 */
typedef enum PromptStatus {
  PROMPT_STATUS_OK = 0,
  PROMPT_STATUS_NULL_POINTER = 1,
  PROMPT_STATUS_INVALID_ARGUMENT = 2,
  PROMPT_STATUS_IO = 3,
  PROMPT_STATUS_PARSE = 4,
  PROMPT_STATUS_INTERNAL = 5,
} PromptStatus;

/**
 * A loaded agent with its state normalizer and per-HP action smoothers.
 */
typedef struct PromptAgent PromptAgent;

/**
 * A loaded two-level QoS predictor.
 */
typedef struct PromptPredictor PromptPredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *prompt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *prompt_version(void);

/**
 * Loads a predictor saved as JSON. Action indices are checked against the
 * default node's action space.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PromptStatus prompt_predictor_load(const char *path, struct PromptPredictor **out);

/**
 * Predicted dropped packets per second for one HP's counters
 * (`PROMPT_COUNTERS` values) under `action` (`PROMPT_BRANCHES` indices).
 *
 * # Safety
 * `handle` must come from `prompt_predictor_load`; `counters` and `action`
 * must point to arrays of the stated lengths; `out` must be writable.
 */
enum PromptStatus prompt_predictor_predict(const struct PromptPredictor *handle,
                                           const double *counters,
                                           const size_t *action,
                                           double *out);

/**
 * Releases a predictor. Null is ignored.
 *
 * # Safety
 * `handle` must be null or come from `prompt_predictor_load`, and must not
 * be used afterwards.
 */
void prompt_predictor_free(struct PromptPredictor *handle);

/**
 * Loads a trained agent directory (`selected.json`, the checkpoint it
 * names, `normalizer.json`). `smoothing_window` of 1 disables smoothing.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum PromptStatus prompt_agent_load(const char *dir,
                                    size_t smoothing_window,
                                    struct PromptAgent **out);

/**
 * Number of HP workloads the agent controls.
 *
 * # Safety
 * `handle` must come from `prompt_agent_load`; `out` must be writable.
 */
enum PromptStatus prompt_agent_hp_count(const struct PromptAgent *handle, size_t *out);

/**
 * Whether the agent's state includes predicted QoS.
 *
 * # Safety
 * `handle` must come from `prompt_agent_load`; `out` must be writable.
 */
enum PromptStatus prompt_agent_uses_prediction(const struct PromptAgent *handle, bool *out);

/**
 * Greedy, smoothed action for the next interval. `counters` holds
 * `n_hp * PROMPT_COUNTERS` values, `predicted` holds `n_hp` values (may be
 * null when the agent does not use predictions) and `action_out` receives
 * `n_hp * PROMPT_BRANCHES` indices.
 *
 * # Safety
 * `handle` must come from `prompt_agent_load`; the arrays must have the
 * stated lengths.
 */
enum PromptStatus prompt_agent_act(struct PromptAgent *handle,
                                   const double *counters,
                                   size_t n_hp,
                                   const double *predicted,
                                   size_t *action_out);

/**
 * Clears the smoothing history, e.g. at the start of a new episode.
 *
 * # Safety
 * `handle` must come from `prompt_agent_load`.
 */
enum PromptStatus prompt_agent_reset(struct PromptAgent *handle);

/**
 * Releases an agent. Null is ignored.
 *
 * # Safety
 * `handle` must be null or come from `prompt_agent_load`, and must not be
 * used afterwards.
 */
void prompt_agent_free(struct PromptAgent *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROMPT_H */
