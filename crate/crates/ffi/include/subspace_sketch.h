#ifndef SUBSPACE_SKETCH_H
#define SUBSPACE_SKETCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_INPUT = 2,
  SS_STATUS_PARSE = 3,
  SS_STATUS_DIMENSION_MISMATCH = 4,
  SS_STATUS_DEGENERATE_SKETCH = 5,
  SS_STATUS_CALIBRATION = 6,
  SS_STATUS_RANK_DEFICIENT = 7,
  SS_STATUS_DEGENERATE_GEOMETRY = 8,
  SS_STATUS_NO_CONVERGENCE = 9,
  SS_STATUS_IO = 10,
  SS_STATUS_BUFFER_TOO_SMALL = 11,
  SS_STATUS_PANIC = 99,
} SsStatus;

// Dense row-major matrix.
typedef struct SsMatrix SsMatrix;

// Gaussian sketch operator.
typedef struct SsSketchOperator SsSketchOperator;

// Subspace held by an orthonormal basis.
typedef struct SsSubspace SsSubspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *ss_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ss_version(void);

// # Safety
// `data` must point to `rows * cols` doubles; `out` must be writable.
enum SsStatus ss_matrix_new(size_t rows, size_t cols, const double *data, struct SsMatrix **out);

// # Safety
// `m` must be a live handle or NULL.
size_t ss_matrix_rows(const struct SsMatrix *m);

// # Safety
// `m` must be a live handle or NULL.
size_t ss_matrix_cols(const struct SsMatrix *m);

// Copies the entries row-major into `out`, which holds `capacity` doubles.
//
// # Safety
// `out` must point to `capacity` writable doubles.
enum SsStatus ss_matrix_copy_data(const struct SsMatrix *m, double *out, size_t capacity);

// Reads an SSKM or CSV matrix file.
//
// # Safety
// `file` must be a NUL-terminated string; `out` must be writable.
enum SsStatus ss_matrix_load(const char *file, struct SsMatrix **out);

// Writes SSKM, or CSV when the name ends in `.csv`.
//
// # Safety
// `m` must be live; `file` must be a NUL-terminated string.
enum SsStatus ss_matrix_save(const struct SsMatrix *m, const char *file);

// # Safety
// `m` must come from this library and not be used afterwards. NULL is ignored.
void ss_matrix_free(struct SsMatrix *m);

// Orthonormalizes the columns of `m` into a subspace.
//
// # Safety
// `m` must be live; `out` must be writable.
enum SsStatus ss_subspace_from_matrix(const struct SsMatrix *m, struct SsSubspace **out);

// Haar-random `dim`-dimensional subspace of R^`ambient`.
//
// # Safety
// `out` must be writable.
enum SsStatus ss_subspace_random(size_t ambient,
                                 size_t dim,
                                 uint64_t seed,
                                 struct SsSubspace **out);

// Pair with `n_cosines` prescribed principal cosines; the first subspace
// has dimension `n_cosines`, the second `d2`.
//
// # Safety
// `cosines` must point to `n_cosines` doubles; outputs must be writable.
enum SsStatus ss_subspace_pair_with_angles(size_t ambient,
                                           const double *cosines,
                                           size_t n_cosines,
                                           size_t d2,
                                           uint64_t seed,
                                           struct SsSubspace **out1,
                                           struct SsSubspace **out2);

// # Safety
// `x` must be a live handle or NULL.
size_t ss_subspace_dim(const struct SsSubspace *x);

// # Safety
// `x` must be a live handle or NULL.
size_t ss_subspace_ambient(const struct SsSubspace *x);

// Copy of the orthonormal basis as a new matrix handle.
//
// # Safety
// `x` must be live; `out` must be writable.
enum SsStatus ss_subspace_basis(const struct SsSubspace *x, struct SsMatrix **out);

// # Safety
// `x` must come from this library and not be used afterwards. NULL is ignored.
void ss_subspace_free(struct SsSubspace *x);

// Principal cosines (descending, `min(d1, d2)` of them) plus affinity² and
// distance². Any output pointer may be NULL to skip it; `cosines` needs
// room for `capacity` doubles.
//
// # Safety
// Handles must be live; non-NULL outputs must be writable.
enum SsStatus ss_principal_angles(const struct SsSubspace *x1,
                                  const struct SsSubspace *x2,
                                  double *cosines,
                                  size_t capacity,
                                  double *affinity_sq,
                                  double *distance_sq);

// `n×ambient` operator with i.i.d. N(0, 1/n) entries drawn from `seed`.
//
// # Safety
// `out` must be writable.
enum SsStatus ss_sketch_operator_new(size_t n,
                                     size_t ambient,
                                     uint64_t seed,
                                     struct SsSketchOperator **out);

// # Safety
// `op` must be a live handle or NULL.
size_t ss_sketch_operator_n(const struct SsSketchOperator *op);

// `span(Φ·U)`; fails with `SS_STATUS_DEGENERATE_SKETCH` on rank collapse.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SsStatus ss_sketch_apply(const struct SsSketchOperator *op,
                              const struct SsSubspace *x,
                              struct SsSubspace **out);

// # Safety
// `op` must come from this library and not be used afterwards. NULL is ignored.
void ss_sketch_operator_free(struct SsSketchOperator *op);

// `aff² + (d2/n)(d1 − aff²)`.
//
// # Safety
// `out` must be writable.
enum SsStatus ss_projected_affinity_estimate(double affinity_sq,
                                             size_t d1,
                                             size_t d2,
                                             size_t n,
                                             double *out);

// `D² − (d2/n)(D² − (d2 − d1)/2)`.
//
// # Safety
// `out` must be writable.
enum SsStatus ss_projected_distance_estimate(double distance_sq,
                                             size_t d1,
                                             size_t d2,
                                             size_t n,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBSPACE_SKETCH_H */
