/* C interface to the gridlrv long-run variance estimators. */

#ifndef GRIDLRV_H
#define GRIDLRV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status of a call; zero is success.
 */
typedef enum GridlrvStatus {
  GRIDLRV_STATUS_OK = 0,
  /**
   * A parameter violates a precondition.
   */
  GRIDLRV_STATUS_INVALID_PARAM = 1,
  /**
   * Dimensions of the arguments do not line up.
   */
  GRIDLRV_STATUS_SHAPE_MISMATCH = 2,
  /**
   * A lag leaves no site pairs inside the grid.
   */
  GRIDLRV_STATUS_ZERO_OVERLAP = 3,
  /**
   * A variance estimate came out negative where a square root is
   * required.
   */
  GRIDLRV_STATUS_NEGATIVE_VARIANCE = 4,
  /**
   * A field file failed to parse.
   */
  GRIDLRV_STATUS_PARSE_ERROR = 5,
  GRIDLRV_STATUS_IO_ERROR = 6,
  GRIDLRV_STATUS_NULL_POINTER = 7,
  /**
   * An internal invariant failed; the library state is still valid.
   */
  GRIDLRV_STATUS_PANIC = 8,
} GridlrvStatus;

/**
 * Weight families of the lag-window estimator.
 */
typedef enum GridlrvKernel {
  GRIDLRV_KERNEL_CONSTANT = 0,
  GRIDLRV_KERNEL_BARTLETT = 1,
  GRIDLRV_KERNEL_TUKEY_HANNING = 2,
  /**
   * Uses the `bandwidth` argument.
   */
  GRIDLRV_KERNEL_QUADRATIC_SPECTRAL = 3,
} GridlrvKernel;

/**
 * Hard-threshold rules applied to the sample autocovariances.
 */
typedef enum GridlrvCut {
  GRIDLRV_CUT_NONE = 0,
  /**
   * Threshold |j|_2^alpha / (n_1 ... n_q) - delta.
   */
  GRIDLRV_CUT_POWER_L2 = 1,
  /**
   * Threshold |j|_inf^alpha / (n_1 ... n_q) - delta.
   */
  GRIDLRV_CUT_POWER_MAX = 2,
  /**
   * Fixed threshold `cut_value`.
   */
  GRIDLRV_CUT_CONSTANT = 3,
} GridlrvCut;

/**
 * A stationary field on an integer grid (opaque).
 */
typedef struct GridlrvField GridlrvField;

/**
 * Side information of an estimate.
 */
typedef struct GridlrvEstimateInfo {
  /**
   * Lags whose autocovariance entered the sum.
   */
  size_t kept_lags;
  /**
   * Nonzero when the truncation box grows too fast for the grid
   * (cube of the largest entry at or above the smallest extent).
   */
  int rate_warning;
} GridlrvEstimateInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty string if
 * none. The pointer stays valid until the next failing call here.
 */
const char *gridlrv_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gridlrv_version(void);

/**
 * Builds a field from a copy of `data`: `p` values per site, sites in
 * row-major order over `shape[0..q]`, `data_len = p * product(shape)`.
 * Returns NULL on failure (see [`gridlrv_last_error`]).
 *
 * # Safety
 * `shape` must point to `q` readable elements and `data` to
 * `data_len` readable elements.
 */
struct GridlrvField *gridlrv_field_create(size_t q,
                                          const size_t *shape,
                                          size_t p,
                                          const double *data,
                                          size_t data_len);

/**
 * Reads the CSV field format. Returns NULL on failure.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
struct GridlrvField *gridlrv_field_read_csv(const char *path);

/**
 * Reads the binary field format. Returns NULL on failure.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
struct GridlrvField *gridlrv_field_read_binary(const char *path);

/**
 * Releases a field handle; NULL is a no-op.
 *
 * # Safety
 * `field` must come from a `gridlrv_field_*` constructor and not be
 * used afterwards.
 */
void gridlrv_field_free(struct GridlrvField *field);

/**
 * Grid dimension, or 0 for NULL.
 *
 * # Safety
 * `field` must be a live handle or NULL.
 */
size_t gridlrv_field_q(const struct GridlrvField *field);

/**
 * Values per site, or 0 for NULL.
 *
 * # Safety
 * `field` must be a live handle or NULL.
 */
size_t gridlrv_field_p(const struct GridlrvField *field);

/**
 * Copies the grid extents into `out[0..len]`; `len` must equal the
 * grid dimension.
 *
 * # Safety
 * `field` must be a live handle; `out` must hold `len` writable
 * elements.
 */
enum GridlrvStatus gridlrv_field_shape(const struct GridlrvField *field, size_t *out, size_t len);

/**
 * Long-run variance estimate over the lag box `|j| <= m`, entries
 * kept only where they clear the threshold rule. Writes the p x p
 * matrix row-major into `sigma2_out[0..sigma2_len]` (`sigma2_len`
 * must be exactly p*p) and, when `info_out` is non-NULL, fills it.
 *
 * # Safety
 * `field` must be a live handle; `m` must hold `m_len` readable
 * elements; `sigma2_out` must hold `sigma2_len` writable elements.
 */
enum GridlrvStatus gridlrv_estimate(const struct GridlrvField *field,
                                    const size_t *m,
                                    size_t m_len,
                                    enum GridlrvKernel kernel,
                                    double bandwidth,
                                    enum GridlrvCut cut,
                                    double alpha,
                                    double delta,
                                    double cut_value,
                                    double *sigma2_out,
                                    size_t sigma2_len,
                                    struct GridlrvEstimateInfo *info_out);

/**
 * Partial-sum significance test of a univariate field against the
 * constant reference `null_value`, at the given two-sided level. On
 * success writes the scaled statistic, estimated sigma, critical
 * value, and rejection flag (0 or 1).
 *
 * # Safety
 * `field` must be a live handle; `m` must hold `m_len` readable
 * elements; the four out pointers must be writable or NULL.
 */
enum GridlrvStatus gridlrv_image_test(const struct GridlrvField *field,
                                      double null_value,
                                      double level,
                                      const size_t *m,
                                      size_t m_len,
                                      enum GridlrvKernel kernel,
                                      double bandwidth,
                                      enum GridlrvCut cut,
                                      double alpha,
                                      double delta,
                                      double cut_value,
                                      double *statistic_out,
                                      double *sigma_hat_out,
                                      double *critical_out,
                                      int *reject_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDLRV_H */
