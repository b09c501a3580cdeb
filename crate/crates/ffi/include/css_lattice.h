#ifndef CSS_LATTICE_H
#define CSS_LATTICE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CssStatus {
  CSS_STATUS_OK = 0,
  CSS_STATUS_NULL_POINTER = 1,
  CSS_STATUS_INVALID_ARGUMENT = 2,
  CSS_STATUS_NOT_CONVERGED = 3,
  CSS_STATUS_EVOLUTION_FAILED = 4,
  CSS_STATUS_OUT_OF_RANGE = 5,
  CSS_STATUS_PANIC = 6,
} CssStatus;

typedef enum CssSeedKind {
  CSS_SEED_KIND_SINGLE_SITE = 0,
  CSS_SEED_KIND_DOUBLE_SITE = 1,
} CssSeedKind;

typedef enum CssDirection {
  CSS_DIRECTION_DECREASING_H = 0,
  CSS_DIRECTION_INCREASING_H = 1,
} CssDirection;

/**
 * Why a branch stopped.
 */
typedef enum CssTermination {
  CSS_TERMINATION_RUNNING = 0,
  CSS_TERMINATION_REACHED_TARGET = 1,
  CSS_TERMINATION_STEP_FLOOR = 2,
  CSS_TERMINATION_OUT_OF_RANGE = 3,
  CSS_TERMINATION_MAX_POINTS = 4,
  CSS_TERMINATION_FOLD_LIMIT = 5,
  CSS_TERMINATION_WINDOW_LIMIT = 6,
  CSS_TERMINATION_CLOSED_LOOP = 7,
} CssTermination;

/**
 * Continuation branch.
 */
typedef struct CssBranch CssBranch;

/**
 * Converged or attempted stationary state.
 */
typedef struct CssState CssState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *css_last_error_message(void);

/**
 * Positive root of `lambda U^{2p} + (h^2/4) U^4 = omega`.
 *
 * # Safety
 * `out` must be null or valid for one `double` write.
 */
enum CssStatus css_scalar_root_single(double lambda, double p, double omega, double h, double *out);

/**
 * Double-site amplitudes: `out_w` at the centre, `out_u` at its neighbour.
 *
 * # Safety
 * Both pointers must be null or valid for one `double` write.
 */
enum CssStatus css_scalar_root_double(double lambda,
                                      double p,
                                      double omega,
                                      double h,
                                      double *out_w,
                                      double *out_u);

/**
 * Newton solve from a single- or double-site seed on `[-half_width, half_width]`.
 *
 * A handle is stored in `*out` whenever the solve ran; the status is
 * `NotConverged` if Newton stopped short.
 *
 * # Safety
 * `out` must be null or valid for one pointer write.
 */
enum CssStatus css_stationary_solve(double lambda,
                                    double p,
                                    double omega,
                                    double h,
                                    enum CssSeedKind seed,
                                    int64_t half_width,
                                    struct CssState **out);

/**
 * # Safety
 * `state` must be null or a handle from this library, not yet freed.
 */
void css_state_free(struct CssState *state);

/**
 * Window length, first site, residual and mass of a state.
 *
 * # Safety
 * `state` must be a live handle; each output pointer null or writable.
 */
enum CssStatus css_state_info(const struct CssState *state,
                              size_t *out_len,
                              int64_t *out_n_min,
                              double *out_residual,
                              double *out_mass);

/**
 * Copy the profile into `buf`, which must hold at least the state length.
 *
 * # Safety
 * `buf` must be valid for `capacity` writes.
 */
enum CssStatus css_state_copy_values(const struct CssState *state, double *buf, size_t capacity);

/**
 * Pseudo-arclength continuation from a converged state.
 * `max_folds = 0` means no fold limit.
 *
 * # Safety
 * `start` must be a live handle and `out` null or writable.
 */
enum CssStatus css_branch_arclength(const struct CssState *start,
                                    enum CssDirection direction,
                                    double h_min,
                                    double h_max,
                                    size_t max_points,
                                    size_t max_folds,
                                    struct CssBranch **out);

/**
 * # Safety
 * `branch` must be null or a handle from this library, not yet freed.
 */
void css_branch_free(struct CssBranch *branch);

/**
 * Number of points and of folds on a branch.
 *
 * # Safety
 * `branch` must be a live handle; outputs null or writable.
 */
enum CssStatus css_branch_sizes(const struct CssBranch *branch,
                                size_t *out_points,
                                size_t *out_folds);

/**
 * Termination reason of a branch and the `h` where it stopped.
 *
 * # Safety
 * `branch` must be a live handle; outputs null or writable.
 */
enum CssStatus css_branch_termination(const struct CssBranch *branch,
                                      enum CssTermination *out_reason,
                                      double *out_h);

/**
 * `(h, mass)` of point `index`.
 *
 * # Safety
 * `branch` must be a live handle; outputs null or writable.
 */
enum CssStatus css_branch_point(const struct CssBranch *branch,
                                size_t index,
                                double *out_h,
                                double *out_mass);

/**
 * Refined `h` of fold `index`.
 *
 * # Safety
 * `branch` must be a live handle; `out_h` null or writable.
 */
enum CssStatus css_branch_fold(const struct CssBranch *branch, size_t index, double *out_h);

/**
 * Evolve `re + i im` (length `len`, first site `n_min`) to `t_end`,
 * overwriting both arrays with the final field.
 *
 * # Safety
 * `re` and `im` must be valid for `len` reads and writes; `out_mass_drift`
 * null or writable.
 */
enum CssStatus css_evolve(double *re,
                          double *im,
                          size_t len,
                          int64_t n_min,
                          double lambda,
                          double p,
                          double h,
                          double t_end,
                          double rel_tol,
                          double *out_mass_drift);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSS_LATTICE_H */
