#ifndef FIBERLAB_H
#define FIBERLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_NOT_FOUND = 3,
  FL_STATUS_CONFIG = 4,
  FL_STATUS_INSUFFICIENT_DEPTH = 5,
  FL_STATUS_MEMORY_BOUND = 6,
  FL_STATUS_BUFFER_TOO_SMALL = 7,
  FL_STATUS_ENGINE = 8,
  FL_STATUS_PANIC = 9,
} FlStatus;

/**
 * Opaque leafwise measure produced by [`fl_invariant_measure`].
 */
typedef struct FlLeafwise FlLeafwise;

/**
 * Opaque fiber system.
 */
typedef struct FlSystem FlSystem;

/**
 * Scalar constants of a system.
 */
typedef struct FlConstants {
  size_t alphabet;
  double theta;
  double alpha;
  double h;
  double c1;
  double xi;
  double lip_bound;
} FlConstants;

/**
 * Summary numbers of a leafwise measure.
 */
typedef struct FlLeafwiseInfo {
  size_t depth;
  size_t cylinders;
  size_t atoms;
  double global_mass;
  double weak_norm;
  /**
   * Weak distance between the measure and its image under one more
   * transfer step.
   */
  double residual;
} FlLeafwiseInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the last failure on this thread into `buf` as a
 * NUL-terminated string and stores the full length (without the NUL) in
 * `needed`. Returns `BufferTooSmall` when the message was truncated.
 * `buf` may be null when `capacity` is zero.
 *
 * # Safety
 * `buf` must point to `capacity` writable bytes and `needed` must be null
 * or valid for writes.
 */
enum FlStatus fl_last_error(char *buf, size_t capacity, size_t *needed);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * Builds one of the catalog systems by name (`dyadic`, `sequence_affine`,
 * `skewed_ifs`, `golden_cantor`, `finite_table`).
 *
 * # Safety
 * `name` must be a valid C string and `out` valid for writes.
 */
enum FlStatus fl_system_catalog(const char *name, struct FlSystem **out);

/**
 * Builds a system from the text of a configuration file.
 *
 * # Safety
 * `text` must be a valid C string and `out` valid for writes.
 */
enum FlStatus fl_system_from_config(const char *text, struct FlSystem **out);

/**
 * Same as [`fl_system_from_config`] but reads the configuration from a file.
 *
 * # Safety
 * `path` must be a valid C string and `out` valid for writes.
 */
enum FlStatus fl_system_from_config_file(const char *path, struct FlSystem **out);

/**
 * Releases a system. Null is ignored.
 *
 * # Safety
 * `sys` must come from this library and must not be used afterwards.
 */
void fl_system_free(struct FlSystem *sys);

/**
 * Fills `out` with the system constants, using `measured_r` as the basis
 * contraction rate.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for writes.
 */
enum FlStatus fl_system_constants(const struct FlSystem *sys,
                                  double measured_r,
                                  struct FlConstants *out);

/**
 * Approximates the invariant measure at `depth` by iterating `steps`
 * transfer steps from a Dirac mass at the left end of the fiber, with
 * compression resolution `delta` (0 disables compression).
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for writes.
 */
enum FlStatus fl_invariant_measure(const struct FlSystem *sys,
                                   size_t depth,
                                   size_t steps,
                                   double delta,
                                   struct FlLeafwise **out);

/**
 * Releases a leafwise measure. Null is ignored.
 *
 * # Safety
 * `mu` must come from this library and must not be used afterwards.
 */
void fl_leafwise_free(struct FlLeafwise *mu);

/**
 * # Safety
 * `mu` must be a live handle and `out` valid for writes.
 */
enum FlStatus fl_leafwise_info(const struct FlLeafwise *mu, struct FlLeafwiseInfo *out);

/**
 * Integrates an observable (`one`, `z`, `z2`, `x0`, `x0*z`, ...) against
 * the measure.
 *
 * # Safety
 * `mu` must be a live handle, `observable_name` a valid C string and `out`
 * valid for writes.
 */
enum FlStatus fl_leafwise_integrate(const struct FlLeafwise *mu,
                                    const char *observable_name,
                                    double *out);

/**
 * Writes `|C_n|` for `n = 0..=n_max` into `values` (length `n_max + 1`).
 * The measure must have depth at least `n_max + 1`.
 *
 * # Safety
 * Handles must be live, names valid C strings and `values` must hold
 * `capacity` doubles.
 */
enum FlStatus fl_correlations(const struct FlSystem *sys,
                              const struct FlLeafwise *mu,
                              const char *f,
                              const char *g,
                              size_t n_max,
                              double delta,
                              double *values,
                              size_t capacity);

/**
 * Flat norm of the signed measure `Σ w_i δ_{pos_i}` on `[lo, hi]`.
 *
 * # Safety
 * `pos` and `weights` must hold `len` doubles and `out` must be valid for
 * writes.
 */
enum FlStatus fl_wk_norm_interval(double lo,
                                  double hi,
                                  const double *pos,
                                  const double *weights,
                                  size_t len,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBERLAB_H */
