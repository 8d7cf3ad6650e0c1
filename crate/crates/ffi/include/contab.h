#ifndef CONTAB_H
#define CONTAB_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the non-zero values match the CLI exit codes.
 */
typedef enum ContabStatus {
  CONTAB_STATUS_OK = 0,
  /**
   * Malformed input, including null pointers.
   */
  CONTAB_STATUS_INPUT_ERROR = 2,
  /**
   * A precondition failed: cyclic graph, budget, infeasible route.
   */
  CONTAB_STATUS_PRECONDITION_ERROR = 3,
  /**
   * Scaling or sampling did not converge.
   */
  CONTAB_STATUS_NUMERICAL_ERROR = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  CONTAB_STATUS_INTERNAL_ERROR = 5,
} ContabStatus;

/**
 * Opaque flow network handle.
 */
typedef struct ContabFlowProblem ContabFlowProblem;

/**
 * Opaque problem handle.
 */
typedef struct ContabProblem ContabProblem;

/**
 * Result of [`contab_estimate_direct`].
 */
typedef struct ContabReport {
  double t_prime;
  double ln_t_prime;
  /**
   * Standard error of `T′`.
   */
  double std_error;
  double ci_low;
  double ci_high;
  double alpha;
  /**
   * `T′`
   */
  double bracket_low;
  /**
   * `α·T′`
   */
  double bracket_high;
  uint64_t samples;
} ContabReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *contab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *contab_version(void);

/**
 * Builds a problem. `weights` is row-major `m × n`, or null for all ones.
 *
 * # Safety
 * `rows` and `cols` must point to `m` and `n` values, `weights` (if
 * non-null) to `m·n`, and `out` must be writable.
 */
enum ContabStatus contab_problem_new(const uint64_t *rows,
                                     size_t m,
                                     const uint64_t *cols,
                                     size_t n,
                                     const double *weights,
                                     struct ContabProblem **out_problem);

/**
 * Parses a problem from `{"rows": [...], "cols": [...], "weights": [[...]]}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out_problem` writable.
 */
enum ContabStatus contab_problem_from_json(const char *json, struct ContabProblem **out_problem);

/**
 * # Safety
 * `problem` must come from a `contab_problem_*` constructor and not be
 * used afterwards. Null is ignored.
 */
void contab_problem_free(struct ContabProblem *problem);

/**
 * Table total `N`, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be a live handle or null.
 */
uint64_t contab_problem_total(const struct ContabProblem *problem);

/**
 * Exact `T` by enumeration, visiting at most `budget` nodes. `out_tables`
 * may be null.
 *
 * # Safety
 * `problem` must be a live handle; `out_total` writable.
 */
enum ContabStatus contab_exact_total(const struct ContabProblem *problem,
                                     uint64_t budget,
                                     double *out_total,
                                     uint64_t *out_tables);

/**
 * Direct Monte Carlo estimate of `T′` with its bracket.
 *
 * # Safety
 * `problem` must be a live handle; `out_report` writable.
 */
enum ContabStatus contab_estimate_direct(const struct ContabProblem *problem,
                                         uint64_t samples,
                                         uint64_t seed,
                                         struct ContabReport *out_report);

/**
 * The approximation factor `α(R, C)`.
 *
 * # Safety
 * `rows` and `cols` must point to `m` and `n` values; `out_alpha` writable.
 */
enum ContabStatus contab_alpha(const uint64_t *rows,
                               size_t m,
                               const uint64_t *cols,
                               size_t n,
                               double *out_alpha);

/**
 * Ryser permanent of a row-major `n × n` matrix.
 *
 * # Safety
 * `a` must point to `n·n` values; `out_permanent` writable.
 */
enum ContabStatus contab_permanent(const double *a, size_t n, double *out_permanent);

/**
 * `ln σ(A)` of a positive row-major `n × n` matrix; `tol <= 0` picks the
 * default.
 *
 * # Safety
 * `a` must point to `n·n` values; `out_log_sigma` writable.
 */
enum ContabStatus contab_log_sigma(const double *a, size_t n, double tol, double *out_log_sigma);

/**
 * Builds a flow network on vertices `0..vertices` with edges
 * `tails[k] → heads[k]` and per-vertex `excess`.
 *
 * # Safety
 * `tails`, `heads` must point to `edges` values, `excess` to `vertices`
 * values; `out_flow` writable.
 */
enum ContabStatus contab_flow_new(size_t vertices,
                                  const size_t *tails,
                                  const size_t *heads,
                                  size_t edges,
                                  const int64_t *excess,
                                  struct ContabFlowProblem **out_flow);

/**
 * # Safety
 * `flow` must come from [`contab_flow_new`] and not be used afterwards.
 * Null is ignored.
 */
void contab_flow_free(struct ContabFlowProblem *flow);

/**
 * Exact number of integer flows, visiting at most `budget` nodes.
 *
 * # Safety
 * `flow` must be a live handle; `out_count` writable.
 */
enum ContabStatus contab_flow_count(const struct ContabFlowProblem *flow,
                                    uint64_t budget,
                                    uint64_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTAB_H */
