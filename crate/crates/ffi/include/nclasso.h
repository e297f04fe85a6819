#ifndef NCLASSO_H
#define NCLASSO_H

/* Generated by cbindgen from the nclasso-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NcStatus {
  NC_STATUS_OK = 0,
  NC_STATUS_INVALID_ARGUMENT = 1,
  NC_STATUS_DIMENSION_MISMATCH = 2,
  NC_STATUS_NUMERICAL_FAILURE = 3,
  NC_STATUS_UNSUPPORTED_DIMENSION = 4,
  NC_STATUS_IO = 5,
  NC_STATUS_PARSE = 6,
  NC_STATUS_NULL_POINTER = 7,
  NC_STATUS_PANIC = 8,
  /**
   * The requested value is not available (e.g. errors without a known truth).
   */
  NC_STATUS_UNAVAILABLE = 9,
} NcStatus;

typedef enum NcModelKind {
  NC_MODEL_KIND_ROBUST = 0,
  NC_MODEL_KIND_BINARY = 1,
  NC_MODEL_KIND_NLS = 2,
} NcModelKind;

typedef enum NcLink {
  NC_LINK_LOGISTIC = 0,
  NC_LINK_TANH = 1,
} NcLink;

/**
 * Opaque dataset handle.
 */
typedef struct NcDataset NcDataset;

/**
 * Opaque fit handle.
 */
typedef struct NcFit NcFit;

/**
 * Model selector. `t0` is read for the robust model, `noise_sd` for nls and
 * `link` for binary and nls.
 */
typedef struct NcModel {
  enum NcModelKind kind;
  enum NcLink link;
  double t0;
  double noise_sd;
} NcModel;

/**
 * Summary of a fit.
 */
typedef struct NcFitSummary {
  double objective;
  size_t iterations;
  bool converged;
  double prox_residual;
  size_t restart_index;
  size_t support_size;
} NcFitSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Null-terminated message of the last failure on this thread (empty if none).
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *nc_last_error(void);

/**
 * Library version as a static null-terminated string.
 */
const char *nc_version(void);

/**
 * Tukey bisquare loss `rho(t)` with cutoff `t0`.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum NcStatus nc_tukey_rho(double t, double t0, double *out);

/**
 * Simulates `n` rows with a Rademacher design of dimension `d`, an
 * `s0`-sparse truth of entries `+-magnitude`, and Gaussian noise with
 * standard deviation `noise_sd`.
 *
 * # Safety
 * `model` must point to a valid `NcModel`; `out` must be writable.
 */
enum NcStatus nc_dataset_generate(const struct NcModel *model,
                                  size_t n,
                                  size_t d,
                                  size_t s0,
                                  double magnitude,
                                  double noise_sd,
                                  uint64_t seed,
                                  struct NcDataset **out);

/**
 * Builds a dataset from a row-major `n x d` design and `n` responses. The
 * truth is unknown, so fit errors are unavailable.
 *
 * # Safety
 * `x` must hold `n * d` doubles, `y` must hold `n` doubles, `out` must be writable.
 */
enum NcStatus nc_dataset_from_arrays(const struct NcModel *model,
                                     const double *x,
                                     const double *y,
                                     size_t n,
                                     size_t d,
                                     struct NcDataset **out);

/**
 * # Safety
 * `model` and `path` must be valid; `out` must be writable.
 */
enum NcStatus nc_dataset_read(const struct NcModel *model,
                              const char *path,
                              struct NcDataset **out);

/**
 * # Safety
 * `data` must be a live dataset handle and `path` a valid C string.
 */
enum NcStatus nc_dataset_write(const struct NcDataset *data, const char *path);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live dataset handle.
 */
size_t nc_dataset_n(const struct NcDataset *data);

/**
 * Number of columns, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live dataset handle.
 */
size_t nc_dataset_d(const struct NcDataset *data);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void nc_dataset_free(struct NcDataset *data);

/**
 * Default penalty of the dataset's model at its size and design bound.
 *
 * # Safety
 * `data` must be a live dataset handle; `out` must be writable.
 */
enum NcStatus nc_default_lambda(const struct NcDataset *data, double *out);

/**
 * Best-of-restarts proximal gradient fit with default settings and penalty
 * `lambda`; `seed` drives the random restarts.
 *
 * # Safety
 * `data` must be a live dataset handle; `out` must be writable.
 */
enum NcStatus nc_fit(const struct NcDataset *data,
                     double lambda,
                     uint64_t seed,
                     struct NcFit **out);

/**
 * Length of the coefficient vector, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t nc_fit_dim(const struct NcFit *fit);

/**
 * Copies the coefficients into `buf`, which must hold `len >= nc_fit_dim(fit)` doubles.
 *
 * # Safety
 * `fit` must be a live fit handle and `buf` valid for `len` writes.
 */
enum NcStatus nc_fit_theta(const struct NcFit *fit, double *buf, size_t len);

/**
 * # Safety
 * `fit` must be a live fit handle; `out` must be writable.
 */
enum NcStatus nc_fit_summary(const struct NcFit *fit, struct NcFitSummary *out);

/**
 * l1 and l2 distances to the truth; `Unavailable` when the truth is unknown.
 *
 * # Safety
 * `fit` must be a live fit handle; `l1` and `l2` must be writable.
 */
enum NcStatus nc_fit_errors(const struct NcFit *fit, double *l1, double *l2);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void nc_fit_free(struct NcFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NCLASSO_H */
