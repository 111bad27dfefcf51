#ifndef AMID_H
#define AMID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Loss measured against the teacher.
 */
#define AMID_DIRECTION_TEACHER 0

/**
 * Loss measured against the student.
 */
#define AMID_DIRECTION_STUDENT 1

/**
 * Outcome of an FFI call.
 */
typedef enum {
  AMID_STATUS_OK = 0,
  AMID_STATUS_NULL_POINTER = 1,
  AMID_STATUS_INVALID_ARGUMENT = 2,
  AMID_STATUS_LENGTH_MISMATCH = 3,
  /**
   * The divergence is infinite; the out-value is set to +inf.
   */
  AMID_STATUS_SUPPORT_VIOLATION = 4,
  AMID_STATUS_EMPTY_SUPPORT = 5,
  AMID_STATUS_NUMERICAL = 6,
  AMID_STATUS_PANIC = 7,
} AmidStatus;

/**
 * Opaque categorical distribution.
 */
typedef struct AmidCategorical AmidCategorical;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *amid_status_string(AmidStatus status);

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next `amid_*` call on the same thread.
 */
const char *amid_last_error(void);

/**
 * Builds a distribution from `len` non-negative weights (normalized).
 *
 * # Safety
 * `probs` must point to `len` readable doubles; `out` must be writable.
 */
AmidStatus amid_categorical_from_probs(const double *probs, size_t len, AmidCategorical **out);

/**
 * Builds `softmax(logits)`.
 *
 * # Safety
 * `logits` must point to `len` readable doubles; `out` must be writable.
 */
AmidStatus amid_categorical_from_logits(const double *logits, size_t len, AmidCategorical **out);

/**
 * Number of outcomes.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
AmidStatus amid_categorical_len(const AmidCategorical *dist, size_t *out);

/**
 * Copies the probabilities into `out`, which must hold exactly `len` entries.
 *
 * # Safety
 * `dist` must be a live handle; `out` must point to `len` writable doubles.
 */
AmidStatus amid_categorical_probs(const AmidCategorical *dist, double *out, size_t len);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `dist` must come from this library and must not be used afterwards.
 */
void amid_categorical_free(AmidCategorical *dist);

/**
 * Builds the alpha-mixture of `p` and `q` into a new handle, with `ln Z` in `out_log_z`.
 *
 * # Safety
 * `p`, `q` must be live handles; `out_r` and `out_log_z` must be writable.
 */
AmidStatus amid_alpha_mixture(const AmidCategorical *p,
                              const AmidCategorical *q,
                              double alpha,
                              double lambda,
                              AmidCategorical **out_r,
                              double *out_log_z);

/**
 * Evaluates a named divergence (`kl`, `rkl`, `jeffreys`, `skl:0.1`, `gjs`,
 * `alpha:0.5`, `ab:0.2,0.7`, ...). On a support violation `out` is +inf.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `p`, `q` live handles; `out` writable.
 */
AmidStatus amid_divergence(const char *name,
                           const AmidCategorical *p,
                           const AmidCategorical *q,
                           double *out);

/**
 * AMiD loss of the student `softmax(theta)` against teacher `p`.
 * `gen` is `kl`, `rkl` or `jeffreys`; `dir` is an `AMID_DIRECTION_*` value.
 *
 * # Safety
 * `p` must be a live handle, `theta` must hold `len` doubles, `gen` must be
 * NUL-terminated and `out` writable.
 */
AmidStatus amid_loss(const AmidCategorical *p,
                     const double *theta,
                     size_t len,
                     double alpha,
                     double lambda,
                     const char *gen,
                     int32_t dir,
                     double *out);

/**
 * Analytic teacher-side gradient of the AMiD loss with respect to `theta`,
 * written into `out_grad` (`len` entries).
 *
 * # Safety
 * `p` must be a live handle; `theta` and `out_grad` must hold `len` doubles;
 * `gen` must be NUL-terminated.
 */
AmidStatus amid_grad(const AmidCategorical *p,
                     const double *theta,
                     size_t len,
                     double alpha,
                     double lambda,
                     const char *gen,
                     double *out_grad);

/**
 * Weighted power mean `f_alpha^-1(sum w_i f_alpha(u_i))` of positive inputs.
 *
 * # Safety
 * `weights` and `inputs` must hold `len` doubles; `out` must be writable.
 */
AmidStatus amid_f_mean(const double *weights,
                       const double *inputs,
                       size_t len,
                       double alpha,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMID_H */
