#ifndef CARTRIDGE_MATCH_H
#define CARTRIDGE_MATCH_H

/* Generated from the Rust sources by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum {
  CM_OK = 0,
  CM_NULL_ARGUMENT = 1,
  CM_INVALID_PARAM = 2,
  CM_INVALID_DATA = 3,
  CM_IO_ERROR = 4,
  CM_FORMAT_ERROR = 5,
  CM_PANIC = 6,
} cm_status;

/**
 * Opaque surface handle. Created by `cm_surface_load`,
 * `cm_surface_from_values`, or `cm_preprocess`; released with
 * `cm_surface_free`.
 */
typedef struct cm_surface cm_surface;

/**
 * Preprocessing configuration. Obtain defaults from
 * `cm_preprocess_params_default` and override selectively.
 */
typedef struct {
  /**
   * Points per RANSAC minimal sample (a plane needs 3).
   */
  uint32_t ransac_sample_size;
  /**
   * RANSAC inlier residual threshold, µm.
   */
  double ransac_inlier_threshold_um;
  /**
   * Desired probability of drawing one all-inlier sample.
   */
  double ransac_confidence;
  /**
   * Assumed outlier proportion.
   */
  double ransac_outlier_rate;
  /**
   * RANSAC sampling iterations.
   */
  uint32_t ransac_iterations;
  /**
   * Seed for the RANSAC sampler.
   */
  uint64_t ransac_seed;
  /**
   * Loess span (proportion of ring radii in each local fit).
   */
  double loess_span;
  /**
   * Loess polynomial degree, 1 or 2.
   */
  uint32_t loess_degree;
  /**
   * Bandpass short-wavelength cutoff, µm.
   */
  double filter_short_cutoff_um;
  /**
   * Bandpass long-wavelength cutoff, µm.
   */
  double filter_long_cutoff_um;
  /**
   * Common lateral resolution surfaces are resampled to, µm.
   */
  double resample_resolution_um;
} cm_preprocess_params;

/**
 * Result of comparing two surfaces. Direction 1 aligns the second argument
 * onto the first; direction 2 the reverse. `s_hat` is the larger of the
 * two correlations.
 */
typedef struct {
  /**
   * Correlation with the first argument as reference.
   */
  double c12;
  /**
   * Correlation with the second argument as reference.
   */
  double c21;
  /**
   * Pair similarity: max(c12, c21).
   */
  double s_hat;
  /**
   * Winning pose of direction 1: rotation (degrees) and row/column lags.
   */
  double theta_1;
  int64_t k_1;
  int64_t l_1;
  /**
   * Winning pose of direction 2.
   */
  double theta_2;
  int64_t k_2;
  int64_t l_2;
} cm_pair_score;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cm_version(void);

/**
 * Message describing the most recent failure on the calling thread. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *cm_last_error_message(void);

/**
 * Loads a C3DP depth grid from `path` into a new handle written to `out`.
 * `id` may be null, in which case the file stem is used.
 *
 * # Safety
 * `path` and `id` follow the C string contract; `out` must be writable.
 */
cm_status cm_surface_load(const char *path, const char *id, cm_surface **out);

/**
 * Writes a handle back out as a C3DP depth grid.
 *
 * # Safety
 * `surface` must be a live handle; `path` follows the C string contract.
 */
cm_status cm_surface_save(const cm_surface *surface, const char *path);

/**
 * Builds a surface from a row-major grid of `rows × cols` values in µm.
 * `valid` may be null (all cells valid); non-finite values are treated as
 * missing either way.
 *
 * # Safety
 * `values` (and `valid` when non-null) must point to `rows × cols`
 * elements; `id` follows the C string contract; `out` must be writable.
 */
cm_status cm_surface_from_values(const double *values,
                                 const uint8_t *valid,
                                 uint32_t rows,
                                 uint32_t cols,
                                 double resolution_um,
                                 const char *id,
                                 cm_surface **out);

/**
 * Copies a handle's grid out: `values` receives one f64 per cell in
 * row-major order with NaN at invalid cells; `valid`, when non-null,
 * receives 1/0 flags. `len` must equal rows × cols.
 *
 * # Safety
 * `values` (and `valid` when non-null) must point to `len` writable
 * elements.
 */
cm_status cm_surface_copy_values(const cm_surface *surface,
                                 double *values,
                                 uint8_t *valid,
                                 size_t len);

/**
 * Row count; 0 when the handle is null.
 *
 * # Safety
 * `surface` must be null or a live handle.
 */
uint32_t cm_surface_rows(const cm_surface *surface);

/**
 * Column count; 0 when the handle is null.
 *
 * # Safety
 * `surface` must be null or a live handle.
 */
uint32_t cm_surface_cols(const cm_surface *surface);

/**
 * Lateral resolution in µm per pixel; 0 when the handle is null.
 *
 * # Safety
 * `surface` must be null or a live handle.
 */
double cm_surface_resolution_um(const cm_surface *surface);

/**
 * Number of valid cells; 0 when the handle is null.
 *
 * # Safety
 * `surface` must be null or a live handle.
 */
size_t cm_surface_valid_count(const cm_surface *surface);

/**
 * Copies the surface id into `buf` as NUL-terminated UTF-8 and returns the
 * number of bytes required including the terminator. Nothing is written
 * when `buf` is null or `len` is too small; 0 is returned for a null
 * handle.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cm_surface_id(const cm_surface *surface, char *buf, size_t len);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `surface` must be null or an owned live handle; it must not be used
 * afterwards.
 */
void cm_surface_free(cm_surface *surface);

/**
 * Fills `out` with the default preprocessing configuration.
 *
 * # Safety
 * `out` must be writable.
 */
cm_status cm_preprocess_params_default(cm_preprocess_params *out);

/**
 * Runs the preprocessing chain — plane leveling, resampling to the common
 * resolution, ring-profile removal, bandpass — and writes a new handle to
 * `out`. `params` may be null for defaults.
 *
 * # Safety
 * `input` must be a live handle; `params` must be null or point to a
 * valid struct; `out` must be writable.
 */
cm_status cm_preprocess(const cm_surface *input,
                        const cm_preprocess_params *params,
                        cm_surface **out);

/**
 * Scores two preprocessed surfaces by maximized cross-correlation.
 * `lag_frac` bounds the translation search as a fraction of the grid size;
 * pass 0 or a negative value for the default of 0.2.
 *
 * # Safety
 * `s1` and `s2` must be live handles; `out` must be writable.
 */
cm_status cm_similarity(const cm_surface *s1,
                        const cm_surface *s2,
                        double lag_frac,
                        cm_pair_score *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARTRIDGE_MATCH_H */
