#ifndef TEAMPLAN_H
#define TEAMPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define TP_MODE_SATISFICING 0

#define TP_MODE_OPTIMAL 1

#define TP_HEURISTIC_ADD 0

#define TP_HEURISTIC_MAX 1

#define TP_HEURISTIC_FF 2

/**
 * Result code of every fallible call.
 */
typedef enum TpStatus {
  TP_STATUS_OK = 0,
  TP_STATUS_NULL_ARGUMENT = 1,
  TP_STATUS_INVALID_UTF8 = 2,
  TP_STATUS_PARSE_ERROR = 3,
  TP_STATUS_GROUND_ERROR = 4,
  TP_STATUS_UNSOLVABLE = 5,
  TP_STATUS_RESOURCE_LIMIT = 6,
  TP_STATUS_INVALID_CONFIG = 7,
  TP_STATUS_INVALID_PLAN = 8,
  TP_STATUS_PANIC = 9,
} TpStatus;

typedef struct TpDomain TpDomain;

typedef struct TpPlan TpPlan;

typedef struct TpProblem TpProblem;

typedef struct TpTask TpTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tp_last_error_message(void);

void tp_string_free(char *s);

enum TpStatus tp_domain_parse(const char *source, struct TpDomain **out);

void tp_domain_free(struct TpDomain *domain);

enum TpStatus tp_problem_parse(const struct TpDomain *domain,
                               const char *source,
                               struct TpProblem **out);

void tp_problem_free(struct TpProblem *problem);

enum TpStatus tp_task_ground(const struct TpDomain *domain,
                             const struct TpProblem *problem,
                             struct TpTask **out);

void tp_task_free(struct TpTask *task);

/**
 * Number of ground actions, 0 for a null handle.
 */
size_t tp_task_num_actions(const struct TpTask *task);

/**
 * Number of ground atoms, 0 for a null handle.
 */
size_t tp_task_num_atoms(const struct TpTask *task);

/**
 * Searches for a plan. `mode` is a `TP_MODE_*` value and `heuristic` a
 * `TP_HEURISTIC_*` value; optimal mode requires `TP_HEURISTIC_MAX`.
 */
enum TpStatus tp_plan(const struct TpTask *task,
                      uint32_t mode,
                      uint32_t heuristic,
                      size_t max_expansions,
                      struct TpPlan **out);

size_t tp_plan_len(const struct TpPlan *plan);

/**
 * Plan cost; NaN for a null handle.
 */
double tp_plan_cost(const struct TpPlan *plan);

/**
 * Plan text, one `<index>: (<Action> <args...>)` line per step and a
 * final `; cost = N` line. Free the result with [`tp_string_free`].
 */
enum TpStatus tp_plan_render(const struct TpPlan *plan, char **out);

void tp_plan_free(struct TpPlan *plan);

/**
 * Validates plan text against a task. Sets `*valid` to 1 or 0 and, when
 * `report` is non-null, stores a human-readable report there. An
 * unparseable plan returns `TpStatus::InvalidPlan`.
 */
enum TpStatus tp_validate_plan_text(const struct TpTask *task,
                                    const char *plan_text,
                                    int *valid,
                                    char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEAMPLAN_H */
