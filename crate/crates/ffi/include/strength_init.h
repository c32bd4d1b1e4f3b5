#ifndef STRENGTH_INIT_H
#define STRENGTH_INIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum SiInitMethod
#ifdef __cplusplus
  : uint32_t
#endif // __cplusplus
 {
  SI_INIT_METHOD_GLOROT_UNIFORM = 0,
  SI_INIT_METHOD_GLOROT_NORMAL = 1,
  SI_INIT_METHOD_KAIMING_UNIFORM = 2,
  SI_INIT_METHOD_KAIMING_NORMAL = 3,
  SI_INIT_METHOD_TRUNCATED_NORMAL = 4,
  SI_INIT_METHOD_ORTHOGONAL = 5,
};
#ifndef __cplusplus
typedef uint32_t SiInitMethod;
#endif // __cplusplus

enum SiPassMode
#ifdef __cplusplus
  : uint32_t
#endif // __cplusplus
 {
  SI_PASS_MODE_INPUT_ONLY = 0,
  SI_PASS_MODE_BIDIRECTIONAL = 1,
};
#ifndef __cplusplus
typedef uint32_t SiPassMode;
#endif // __cplusplus

enum SiSearchMode
#ifdef __cplusplus
  : uint32_t
#endif // __cplusplus
 {
  SI_SEARCH_MODE_MIN = 0,
  SI_SEARCH_MODE_MAX = 1,
};
#ifndef __cplusplus
typedef uint32_t SiSearchMode;
#endif // __cplusplus

enum SiSide
#ifdef __cplusplus
  : uint32_t
#endif // __cplusplus
 {
  SI_SIDE_INPUT = 0,
  SI_SIDE_OUTPUT = 1,
};
#ifndef __cplusplus
typedef uint32_t SiSide;
#endif // __cplusplus

/**
 * Result code of every fallible call.
 */
typedef enum SiStatus {
  SI_STATUS_OK = 0,
  SI_STATUS_NULL_POINTER = 1,
  SI_STATUS_INVALID_ARGUMENT = 2,
  SI_STATUS_IO = 3,
  SI_STATUS_FORMAT = 4,
  SI_STATUS_NON_FINITE = 5,
  SI_STATUS_PANIC = 6,
} SiStatus;

/**
 * Opaque weight matrix.
 */
typedef struct SiMatrix SiMatrix;

/**
 * Population moments of a strength vector.
 */
typedef struct SiStrengthStats {
  size_t n;
  double mean;
  double variance;
  double fourth_central_moment;
  double max_abs;
  double skewness;
  double excess_kurtosis;
} SiStrengthStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the calling thread's most recent failure, or null. Valid until
 * the next failing call on the same thread.
 */
const char *si_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *si_version(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles; `out` must be writable.
 */
enum SiStatus si_matrix_new(size_t rows, size_t cols, const double *data, struct SiMatrix **out);

/**
 * Releases a matrix. Null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void si_matrix_free(struct SiMatrix *m);

/**
 * Row count, or 0 for null.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t si_matrix_rows(const struct SiMatrix *m);

/**
 * Column count, or 0 for null.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t si_matrix_cols(const struct SiMatrix *m);

/**
 * Copies the row-major payload into `dst`, which holds `len` doubles.
 * `len` must equal `rows * cols`.
 *
 * # Safety
 * `m` must be a live handle and `dst` must have room for `len` doubles.
 */
enum SiStatus si_matrix_copy_data(const struct SiMatrix *m, double *dst, size_t len);

/**
 * Reads a WMAT file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SiStatus si_matrix_load(const char *path, struct SiMatrix **out);

/**
 * Writes a WMAT file.
 *
 * # Safety
 * `m` must be a live handle; `path` a NUL-terminated string.
 */
enum SiStatus si_matrix_save(const struct SiMatrix *m, const char *path);

/**
 * Samples a `rows x cols` layer. `gain` only affects the orthogonal method.
 *
 * # Safety
 * `out` must be writable.
 */
enum SiStatus si_init(uint32_t method,
                      size_t rows,
                      size_t cols,
                      double gain,
                      uint64_t seed,
                      uint32_t layer,
                      uint32_t rep,
                      struct SiMatrix **out);

/**
 * Best of `k` sampled layers by input-strength variance.
 *
 * # Safety
 * `out` must be writable.
 */
enum SiStatus si_variance_search(uint32_t method,
                                 size_t rows,
                                 size_t cols,
                                 double gain,
                                 size_t k,
                                 uint32_t mode,
                                 uint64_t seed,
                                 uint32_t layer,
                                 uint32_t rep,
                                 struct SiMatrix **out);

/**
 * PA-rewired copy of `m`.
 *
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum SiStatus si_rewire(const struct SiMatrix *m,
                        uint32_t passes,
                        uint64_t seed,
                        uint32_t layer,
                        uint32_t rep,
                        struct SiMatrix **out);

/**
 * Rewires a `w x h x z x o` kernel held in `data` (index
 * `((iw*h + ih)*z + iz)*o + io`) and writes the result to `out_data`. The
 * two buffers may alias.
 *
 * # Safety
 * Both buffers must hold `w*h*z*o` doubles.
 */
enum SiStatus si_rewire_conv(const double *data,
                             size_t w,
                             size_t h,
                             size_t z,
                             size_t o,
                             uint32_t passes,
                             uint64_t seed,
                             uint32_t layer,
                             uint32_t rep,
                             double *out_data);

/**
 * Strength statistics of `m` on `side`.
 *
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum SiStatus si_strength_stats(const struct SiMatrix *m,
                                uint32_t side,
                                struct SiStrengthStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRENGTH_INIT_H */
