#ifndef DDLAWS_H
#define DDLAWS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DdStatus {
  DD_STATUS_OK = 0,
  DD_STATUS_NON_CONVERGENT = 1,
  DD_STATUS_NON_FINITE = 2,
  DD_STATUS_NOT_BRACKETED = 3,
  DD_STATUS_RULE_VIOLATION = 4,
  DD_STATUS_NOT_INTEGRABLE = 5,
  DD_STATUS_LAMBDA_FINITE = 6,
  DD_STATUS_PRECONDITION_VIOLATED = 7,
  DD_STATUS_INVALID_STRIKE = 8,
  DD_STATUS_DOMAIN_EXIT = 9,
  DD_STATUS_EMPTY = 10,
  DD_STATUS_SYNTAX = 11,
  DD_STATUS_CONFIG = 12,
  DD_STATUS_NULL_POINTER = 13,
  DD_STATUS_INVALID_UTF8 = 14,
  DD_STATUS_PANIC = 15,
} DdStatus;

/**
 * Standard stopping rules; `param` is the floor, the drawdown size or the
 * drawdown fraction respectively.
 */
typedef enum DdRuleKind {
  DD_RULE_KIND_DOWNFALL_TO = 0,
  DD_RULE_KIND_FIXED_DRAWDOWN = 1,
  DD_RULE_KIND_RELATIVE_DRAWDOWN = 2,
} DdRuleKind;

/**
 * Which maximum drawdown law to evaluate.
 */
typedef enum DdDrawdownLaw {
  /**
   * Drawdown before reaching an upper level.
   */
  DD_DRAWDOWN_LAW_ABSOLUTE_UPPER = 0,
  /**
   * Relative drawdown before reaching an upper level.
   */
  DD_DRAWDOWN_LAW_RELATIVE_UPPER = 1,
  /**
   * Drawdown before falling to a lower level.
   */
  DD_DRAWDOWN_LAW_ABSOLUTE_LOWER = 2,
  /**
   * Relative drawdown before falling to a lower level.
   */
  DD_DRAWDOWN_LAW_RELATIVE_LOWER = 3,
} DdDrawdownLaw;

/**
 * Martingale or diffusion on which laws are evaluated.
 */
typedef struct DdBase DdBase;

/**
 * Parsed single-variable expression.
 */
typedef struct DdExpr DdExpr;

/**
 * A stopping rule bound to a base.
 */
typedef struct DdTransform DdTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dd_last_error(void);

/**
 * Parses `text` (NUL-terminated UTF-8) into `*out`.
 *
 * # Safety
 * `text` must be a valid C string and `out` valid for writes.
 */
enum DdStatus dd_expr_parse(const char *text, struct DdExpr **out);

/**
 * # Safety
 * `e` must come from [`dd_expr_parse`]; `out` valid for writes.
 */
enum DdStatus dd_expr_eval(const struct DdExpr *e, double y, double *out);

/**
 * # Safety
 * `e` must be null or come from [`dd_expr_parse`], and not be used after.
 */
void dd_expr_free(struct DdExpr *e);

/**
 * Driftless base started at `start`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DdStatus dd_base_martingale(double start, struct DdBase **out);

/**
 * Brownian motion with drift `b` and volatility `sigma`, started at `y0`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DdStatus dd_base_brownian(double y0, double b, double sigma, struct DdBase **out);

/**
 * Diffusion with drift and volatility given as expressions in `y`, on
 * the interval `(lo, hi)`.
 *
 * # Safety
 * `mu` and `sigma` must come from [`dd_expr_parse`]; `out` valid for writes.
 */
enum DdStatus dd_base_diffusion(const struct DdExpr *mu,
                                const struct DdExpr *sigma,
                                double y0,
                                double lo,
                                double hi,
                                struct DdBase **out);

/**
 * # Safety
 * `b` must be null or come from a `dd_base_*` constructor, and not be used after.
 */
void dd_base_free(struct DdBase *b);

/**
 * Standard rule on `base`.
 *
 * # Safety
 * `base` must come from a `dd_base_*` constructor; `out` valid for writes.
 */
enum DdStatus dd_transform_new(const struct DdBase *base,
                               enum DdRuleKind kind,
                               double param,
                               struct DdTransform **out);

/**
 * Rule with boundary `lambda(running max)` on `base`.
 *
 * # Safety
 * `base` and `lambda` must be live handles; `out` valid for writes.
 */
enum DdStatus dd_transform_custom(const struct DdBase *base,
                                  const struct DdExpr *lambda,
                                  struct DdTransform **out);

/**
 * # Safety
 * `t` must be null or come from a `dd_transform_*` constructor, and not be used after.
 */
void dd_transform_free(struct DdTransform *t);

/**
 * Cumulative hazard from the start to `x`.
 *
 * # Safety
 * `t` must be a live transform; `out` valid for writes.
 */
enum DdStatus dd_big_lambda(const struct DdTransform *t, double x, double *out);

/**
 * `P[running max at the trigger > x]` from the state `(y, ybar)`.
 *
 * # Safety
 * `t` must be a live transform; `out` valid for writes.
 */
enum DdStatus dd_sup_survival(const struct DdTransform *t,
                              double y,
                              double ybar,
                              double x,
                              double *out);

/**
 * Probability that the running max at the trigger is already attained.
 *
 * # Safety
 * `t` must be a live transform; `out` valid for writes.
 */
enum DdStatus dd_last_passage_cdf(const struct DdTransform *t, double y, double ybar, double *out);

/**
 * Probability of reaching `k` before the trigger.
 *
 * # Safety
 * `t` must be a live transform; `out` valid for writes.
 */
enum DdStatus dd_no_breach_probability(const struct DdTransform *t,
                                       double y,
                                       double ybar,
                                       double k,
                                       double *out);

/**
 * Price and hedge of the claim paying `h(running max)` at the trigger.
 *
 * # Safety
 * `t` and `h` must be live handles; `price` and `hedge` valid for writes.
 */
enum DdStatus dd_trigger_option(const struct DdTransform *t,
                                const struct DdExpr *h,
                                double y,
                                double ybar,
                                double *price,
                                double *hedge);

/**
 * `P[running max > x]` at the first drawdown of size `c` of a drifted
 * Brownian motion started at `y0`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DdStatus dd_lehoczky_survival(double y0,
                                   double b,
                                   double sigma,
                                   double c,
                                   double x,
                                   double *out);

/**
 * Distribution function at `x` of the maximum (relative) drawdown until
 * the level `k` is reached, from the state `(y, ybar)`.
 *
 * # Safety
 * `base` must be a live handle; `out` valid for writes.
 */
enum DdStatus dd_max_drawdown_cdf(const struct DdBase *base,
                                  enum DdDrawdownLaw law,
                                  double y,
                                  double ybar,
                                  double k,
                                  double x,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDLAWS_H */
